#ifndef KTCLOCK_QUANTUM_ORACLE_HPP
#define KTCLOCK_QUANTUM_ORACLE_HPP

#include <complex>
#include <cstdint>
#include <vector>

#include "ktclock/lattice.hpp"

namespace ktclock {

// Exact small-instance ground truth: the deformed qudit stabilizer state on
// the edges, its reduced density diagonals, the fully enumerated clock model,
// and the consistency checks between the two.

inline constexpr std::int64_t kMaxStateDim = 10'000'000;     // d^N guard
inline constexpr std::int64_t kMaxEnumConfigs = 100'000'000; // d^V guard

// Dense amplitude vector over the computational (Z eigen-) basis. Basis index
// b encodes the edge labels as little-endian base-d digits: m_e = (b / d^e) % d.
struct QuditState {
    int d = 0;
    int n_qudits = 0;
    std::vector<std::complex<double>> amp;

    std::int64_t dim() const { return static_cast<std::int64_t>(amp.size()); }
};

// d^n with the state-size guard applied; throws SizeGuardError.
std::int64_t guarded_power(int d, int n, std::int64_t limit, const char* what);

// The stabilizer-group superposition built from the all-zeros basis state by
// the product over vertices of (1 + A_v + ... + A_v^{d-1}); normalized, all
// amplitudes real and non-negative.
QuditState build_kitaev_state(const LatticeGeometry& geom, int d);

// Vertex operator A_v^power: adds +power on outward edges and -power on
// inward edges of v (mod d). A basis permutation.
void apply_vertex_op(const LatticeGeometry& geom, QuditState& state, int v, int power);

// Plaquette operator: multiplies each basis state by w^(signed digit sum) with
// w = exp(2*pi*i/d) and the clockwise edge signs.
void apply_plaquette_op(const LatticeGeometry& geom, QuditState& state, int p);

// Multiplies each basis amplitude by prod_i exp(beta*cos(2*pi*m_i/d)) with the
// max exponent factored out, renormalizes, and returns log of the squared norm
// prior to renormalization. For the normalized loop state this equals
// log(Z_clock(T=1/(2*beta)) / d^V).
double apply_deformation(QuditState& state, double beta);

// Diagonal of the one- or two-qudit reduced density matrix in the Z basis.
std::vector<double> reduced_diagonal(const QuditState& state, int edge);
std::vector<double> reduced_diagonal2(const QuditState& state, int edge_a, int edge_b);

// Largest |off-diagonal| element of the reduced density matrix on one or two
// edges; the loop structure forces these to vanish.
double max_offdiagonal(const QuditState& state, const std::vector<int>& edges);

// Classical edge-variable sign convention. HeadMinusTail is the adopted
// default; TailMinusHead is the globally reflected (equivalent) choice;
// FlipVertical mixes the two across orientations and serves as the negative
// control for the mapping verification.
enum class EdgeConvention { HeadMinusTail, TailMinusHead, FlipVertical };

// Full enumeration of the d-state clock model on the L x L torus.
struct ExactClockTable {
    int d = 0, L = 0, V = 0, N = 0;
    double T = 0.0;
    double log_z = 0.0;
    double e_mean = 0.0, e2_mean = 0.0, cv = 0.0;
    double um2 = 0.0, um4 = 0.0, um = 0.0;
    std::vector<double> single; // N x d edge-variable probabilities
    std::vector<double> pair;   // N x N x d x d joint probabilities, a != b
    bool has_pairs = false;
    double ge = 0.0, get = 0.0, q = 0.0; // exact measures (when has_pairs)

    double single_prob(int a, int m) const {
        return single[static_cast<std::size_t>(a) * d + m];
    }
    double pair_prob(int a, int b, int ma, int mb) const {
        return pair[((static_cast<std::size_t>(a) * N + b) * d + ma) * d + mb];
    }
};

ExactClockTable enumerate_clock(int d, int L, double T, bool with_pairs = true,
                                EdgeConvention conv = EdgeConvention::HeadMinusTail);

struct MappingReport {
    int d = 0, L = 0;
    double beta = 0.0, beta_ref = 0.0;
    double T = 0.0, T_ref = 0.0;
    double norm_logratio_dev = 0.0; // |quantum log norm ratio - classical log Z ratio|
    double max_single_dev = 0.0;
    int worst_single_edge = -1, worst_single_m = -1;
    double max_pair_dev = 0.0;
    int worst_pair_a = -1, worst_pair_b = -1, worst_pair_ma = -1, worst_pair_mb = -1;
    double tolerance = 0.0;
    bool pass = false;
};

// Builds |K_d(beta)> exactly, enumerates the clock model at T = 1/(2*beta) and
// T_ref = 1/beta, and compares (i) the squared-norm ratio against the
// partition-function ratio and (ii) every one- and two-edge reduced diagonal
// against the classical edge-variable probabilities. PASS iff all deviations
// are below 1e-10.
MappingReport verify_mapping(int d, int L, double beta,
                             EdgeConvention conv = EdgeConvention::HeadMinusTail);

std::string mapping_report_json(const MappingReport& report);

} // namespace ktclock

#endif
