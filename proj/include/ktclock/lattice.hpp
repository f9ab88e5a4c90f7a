#ifndef KTCLOCK_LATTICE_HPP
#define KTCLOCK_LATTICE_HPP

#include <cstdint>
#include <vector>

#include "ktclock/errors.hpp"

namespace ktclock {

// Directed L x L square lattice with periodic boundaries. Vertices carry the
// classical spins, edges carry the qudits / edge variables.
//
// Indexing conventions (fixed; everything downstream relies on them):
//   vertex v = y*L + x                       (row-major)
//   edge   e = 2*v + orientation             (horizontal first, then vertical)
//   horizontal edge: tail (x, y) -> head (x+1 mod L, y)   points +x
//   vertical   edge: tail (x, y) -> head (x, y+1 mod L)   points +y
// Plaquette p = y*L + x is bounded by vertices (x,y), (x+1,y), (x,y+1),
// (x+1,y+1); its edge signs are +1 when the edge direction agrees with the
// clockwise traversal (left and top edges) and -1 otherwise (bottom, right).
// Vertex incidence signs are +1 outward, -1 inward.

enum Orientation : int { kHorizontal = 0, kVertical = 1 };

struct SignedEdge {
    std::int32_t edge;
    std::int8_t sign; // +1 / -1
};

struct LatticeGeometry {
    int L = 0;
    int V = 0; // vertices, = L^2
    int N = 0; // edges,    = 2 L^2

    std::vector<std::int32_t> edge_tail;  // per edge
    std::vector<std::int32_t> edge_head;  // per edge
    std::vector<SignedEdge> vertex_star;  // 4 per vertex: 2 outward, 2 inward
    std::vector<SignedEdge> plaquette;    // 4 per plaquette
    std::vector<std::int32_t> neighbors;  // 4 per vertex: +x, -x, +y, -y

    int vertex(int x, int y) const { return y * L + x; }
    int edge(int orientation, int v) const { return 2 * v + orientation; }
    int edge_orientation(int e) const { return e & 1; }
    int edge_anchor(int e) const { return e >> 1; } // tail vertex
    int vertex_x(int v) const { return v % L; }
    int vertex_y(int v) const { return v / L; }

    const SignedEdge* star_of(int v) const { return &vertex_star[4 * v]; }
    const SignedEdge* plaquette_of(int p) const { return &plaquette[4 * p]; }
    const std::int32_t* neighbors_of(int v) const { return &neighbors[4 * v]; }

    // translate an edge by a lattice vector (sx, sy); preserves orientation
    int translate_edge(int e, int sx, int sy) const {
        int v = edge_anchor(e);
        int x = (vertex_x(v) + sx) % L;
        int y = (vertex_y(v) + sy) % L;
        return edge(edge_orientation(e), vertex(x, y));
    }
};

// Throws ConfigError for L < 2 (L = 1 degenerates to self-loops).
LatticeGeometry build_lattice(int L);

// Translation class of an ordered pair of distinct edges: the orientations of
// both edges plus the displacement of b's anchor from a's anchor, mod L. The
// classes partition all N(N-1) ordered pairs; each class holds exactly L^2
// pairs (one per placement of a's anchor).
struct PairClass {
    int orient_a = 0;
    int orient_b = 0;
    int dx = 0;
    int dy = 0;
    std::int64_t multiplicity = 0; // = L^2
    std::int32_t index = 0;        // dense in [0, 4L^2 - 2)
};

// Number of classes: 4L^2 orientation/displacement combinations minus the two
// same-edge combinations (orient_a == orient_b with zero displacement).
inline int pair_class_count(int L) { return 4 * L * L - 2; }

// Dense class index from the flat key ((oa*2+ob)*L + dy)*L + dx. The two
// invalid flat keys are 0 (h,h,0,0) and 3L^2 (v,v,0,0).
inline int pair_class_index(int L, int oa, int ob, int dx, int dy) {
    int flat = ((oa * 2 + ob) * L + dy) * L + dx;
    return flat - 1 - (flat > 3 * L * L ? 1 : 0);
}

// Throws ConfigError when a == b or an index is out of range.
PairClass pair_class_of(const LatticeGeometry& geom, int a, int b);

// Materialized list of all classes in dense-index order.
std::vector<PairClass> enumerate_pair_classes(const LatticeGeometry& geom);

} // namespace ktclock

#endif
