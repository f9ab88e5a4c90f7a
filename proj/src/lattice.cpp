#include "ktclock/lattice.hpp"

#include <string>

namespace ktclock {

LatticeGeometry build_lattice(int L) {
    if (L < 2)
        throw ConfigError("build_lattice: L must be >= 2, got " + std::to_string(L));

    LatticeGeometry g;
    g.L = L;
    g.V = L * L;
    g.N = 2 * L * L;
    g.edge_tail.resize(g.N);
    g.edge_head.resize(g.N);
    g.vertex_star.resize(4 * g.V);
    g.plaquette.resize(4 * g.V);
    g.neighbors.resize(4 * g.V);

    auto wrap = [L](int c) { return (c + L) % L; };

    for (int y = 0; y < L; ++y) {
        for (int x = 0; x < L; ++x) {
            const int v = g.vertex(x, y);
            const int xe = g.vertex(wrap(x + 1), y);
            const int ye = g.vertex(x, wrap(y + 1));

            g.edge_tail[g.edge(kHorizontal, v)] = v;
            g.edge_head[g.edge(kHorizontal, v)] = xe;
            g.edge_tail[g.edge(kVertical, v)] = v;
            g.edge_head[g.edge(kVertical, v)] = ye;

            g.neighbors[4 * v + 0] = xe;
            g.neighbors[4 * v + 1] = g.vertex(wrap(x - 1), y);
            g.neighbors[4 * v + 2] = ye;
            g.neighbors[4 * v + 3] = g.vertex(x, wrap(y - 1));
        }
    }

    for (int y = 0; y < L; ++y) {
        for (int x = 0; x < L; ++x) {
            const int v = g.vertex(x, y);
            const int left = g.vertex(wrap(x - 1), y);
            const int below = g.vertex(x, wrap(y - 1));

            // star: own edges point away, the left/below anchored ones point in
            SignedEdge* star = &g.vertex_star[4 * v];
            star[0] = {static_cast<std::int32_t>(g.edge(kHorizontal, v)), +1};
            star[1] = {static_cast<std::int32_t>(g.edge(kVertical, v)), +1};
            star[2] = {static_cast<std::int32_t>(g.edge(kHorizontal, left)), -1};
            star[3] = {static_cast<std::int32_t>(g.edge(kVertical, below)), -1};

            // plaquette anchored at its lower-left vertex; clockwise traversal
            // runs up the left side, along the top, down the right, back along
            // the bottom, so left/top carry +1 and right/bottom carry -1.
            const int right = g.vertex(wrap(x + 1), y);
            const int above = g.vertex(x, wrap(y + 1));
            SignedEdge* plq = &g.plaquette[4 * v];
            plq[0] = {static_cast<std::int32_t>(g.edge(kVertical, v)), +1};      // left
            plq[1] = {static_cast<std::int32_t>(g.edge(kHorizontal, above)), +1}; // top
            plq[2] = {static_cast<std::int32_t>(g.edge(kVertical, right)), -1};  // right
            plq[3] = {static_cast<std::int32_t>(g.edge(kHorizontal, v)), -1};    // bottom
        }
    }
    return g;
}

PairClass pair_class_of(const LatticeGeometry& geom, int a, int b) {
    if (a < 0 || a >= geom.N || b < 0 || b >= geom.N)
        throw ConfigError("pair_class_of: edge index out of range");
    if (a == b)
        throw ConfigError("pair_class_of: ordered pair requires distinct edges");

    const int L = geom.L;
    PairClass c;
    c.orient_a = geom.edge_orientation(a);
    c.orient_b = geom.edge_orientation(b);
    const int va = geom.edge_anchor(a);
    const int vb = geom.edge_anchor(b);
    c.dx = (geom.vertex_x(vb) - geom.vertex_x(va) + L) % L;
    c.dy = (geom.vertex_y(vb) - geom.vertex_y(va) + L) % L;
    c.multiplicity = static_cast<std::int64_t>(L) * L;
    c.index = pair_class_index(L, c.orient_a, c.orient_b, c.dx, c.dy);
    return c;
}

std::vector<PairClass> enumerate_pair_classes(const LatticeGeometry& geom) {
    const int L = geom.L;
    std::vector<PairClass> out;
    out.reserve(pair_class_count(L));
    for (int oa = 0; oa < 2; ++oa)
        for (int ob = 0; ob < 2; ++ob)
            for (int dy = 0; dy < L; ++dy)
                for (int dx = 0; dx < L; ++dx) {
                    if (oa == ob && dx == 0 && dy == 0) continue; // same edge
                    PairClass c;
                    c.orient_a = oa;
                    c.orient_b = ob;
                    c.dx = dx;
                    c.dy = dy;
                    c.multiplicity = static_cast<std::int64_t>(L) * L;
                    c.index = pair_class_index(L, oa, ob, dx, dy);
                    out.push_back(c);
                }
    return out;
}

} // namespace ktclock
