#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <set>
#include <vector>

#include "ktclock/quantum_oracle.hpp"
#include "ktclock/rng.hpp"

using namespace ktclock;

namespace {

double max_diff(const QuditState& a, const QuditState& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.amp.size(); ++i)
        worst = std::max(worst, std::abs(a.amp[i] - b.amp[i]));
    return worst;
}

// independent count of the stabilizer-product orbit of |0...0>: every tuple of
// vertex powers (k_v) sends edge e to (k_tail - k_head) mod d
std::set<std::int64_t> stabilizer_orbit(const LatticeGeometry& g, int d) {
    std::vector<std::int64_t> pw(static_cast<std::size_t>(g.N) + 1, 1);
    for (int e = 0; e < g.N; ++e) pw[e + 1] = pw[e] * d;
    std::set<std::int64_t> orbit;
    std::vector<int> k(static_cast<std::size_t>(g.V), 0);
    const std::int64_t tuples = static_cast<std::int64_t>(std::pow(d, g.V));
    for (std::int64_t t = 0; t < tuples; ++t) {
        std::int64_t rest = t;
        for (int v = 0; v < g.V; ++v) {
            k[v] = static_cast<int>(rest % d);
            rest /= d;
        }
        std::int64_t idx = 0;
        for (int e = 0; e < g.N; ++e) {
            const int m = ((k[g.edge_tail[e]] - k[g.edge_head[e]]) % d + d) % d;
            idx += m * pw[e];
        }
        orbit.insert(idx);
    }
    return orbit;
}

} // namespace

TEST_CASE("kitaev state support equals the stabilizer-product orbit") {
    for (int d : {2, 3}) {
        auto g = build_lattice(2);
        const QuditState st = build_kitaev_state(g, d);
        std::set<std::int64_t> nonzero;
        for (std::int64_t b = 0; b < st.dim(); ++b)
            if (std::abs(st.amp[b]) > 1e-12) nonzero.insert(b);
        const auto orbit = stabilizer_orbit(g, d);
        CHECK(nonzero == orbit);
        // group of d^V vertex-power tuples with the one global relation
        CHECK(static_cast<std::int64_t>(nonzero.size()) ==
              static_cast<std::int64_t>(std::pow(d, g.V)) / d);
        if (d == 2) CHECK(nonzero.size() == 8);
        // equal weights on the support
        const double expect = 1.0 / std::sqrt(static_cast<double>(orbit.size()));
        for (auto b : orbit)
            CHECK(std::abs(st.amp[b].real() - expect) < 1e-12);
    }
}

TEST_CASE("stabilizers fix the state") {
    for (int d : {2, 3}) {
        auto g = build_lattice(2);
        const QuditState st = build_kitaev_state(g, d);
        for (int v = 0; v < g.V; ++v) {
            QuditState moved = st;
            apply_vertex_op(g, moved, v, 1);
            CHECK(max_diff(moved, st) < 1e-12);
        }
        for (int p = 0; p < g.V; ++p) {
            QuditState moved = st;
            apply_plaquette_op(g, moved, p);
            CHECK(max_diff(moved, st) < 1e-12);
        }
        // the deformation is diagonal, so the plaquette operators still fix it
        QuditState deformed = st;
        apply_deformation(deformed, 0.8);
        for (int p = 0; p < g.V; ++p) {
            QuditState moved = deformed;
            apply_plaquette_op(g, moved, p);
            CHECK(max_diff(moved, deformed) < 1e-12);
        }
    }
}

TEST_CASE("vertex and plaquette operators commute on random states") {
    for (int d : {2, 3}) {
        auto g = build_lattice(2);
        Rng rng(17 + d);
        QuditState psi;
        psi.d = d;
        psi.n_qudits = g.N;
        psi.amp.resize(static_cast<std::size_t>(std::pow(d, g.N)));
        for (auto& a : psi.amp) a = {rng.uniform01() - 0.5, rng.uniform01() - 0.5};

        for (int v : {0, 3})
            for (int p : {0, 1, 2}) {
                QuditState ab = psi, ba = psi;
                apply_plaquette_op(g, ab, p);
                apply_vertex_op(g, ab, v, 1);
                apply_vertex_op(g, ba, v, 1);
                apply_plaquette_op(g, ba, p);
                CHECK(max_diff(ab, ba) < 1e-12);
            }
        // A_v^d = identity
        QuditState cyc = psi;
        for (int k = 0; k < d; ++k) apply_vertex_op(g, cyc, 1, 1);
        CHECK(max_diff(cyc, psi) == 0.0);
    }
}

TEST_CASE("amplitudes stay real and non-negative under deformation") {
    auto g = build_lattice(2);
    QuditState st = build_kitaev_state(g, 3);
    apply_deformation(st, 1.3);
    for (const auto& a : st.amp) {
        CHECK(std::abs(a.imag()) < 1e-14);
        CHECK(a.real() > -1e-14);
    }
}

TEST_CASE("deformation limits") {
    auto g = build_lattice(2);
    QuditState st = build_kitaev_state(g, 3);
    QuditState unchanged = st;
    apply_deformation(unchanged, 0.0);
    CHECK(max_diff(unchanged, st) < 1e-14);

    QuditState frozen = st;
    apply_deformation(frozen, 50.0);
    CHECK(std::norm(frozen.amp[0]) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("squared norm under deformation tracks the clock partition function") {
    for (int d : {2, 3}) {
        auto g = build_lattice(2);
        for (double beta : {0.3, 0.7, 1.1}) {
            QuditState st = build_kitaev_state(g, d);
            const double log_n2 = apply_deformation(st, beta);
            const ExactClockTable tab = enumerate_clock(d, 2, 1.0 / (2.0 * beta), false);
            CHECK(std::abs(log_n2 - (tab.log_z - g.V * std::log(double(d)))) < 1e-10);
        }
    }
}

TEST_CASE("reduced density diagonals") {
    auto g = build_lattice(2);
    QuditState st2 = build_kitaev_state(g, 2);
    for (int e = 0; e < g.N; ++e) {
        const auto p = reduced_diagonal(st2, e);
        CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-12));
    }

    QuditState frozen = build_kitaev_state(g, 3);
    apply_deformation(frozen, 50.0);
    const auto pf = reduced_diagonal(frozen, 2);
    CHECK(pf[0] == doctest::Approx(1.0).epsilon(1e-8));

    // quantum route vs exact classical enumeration at T = 1/(2 beta)
    QuditState st3 = build_kitaev_state(g, 3);
    apply_deformation(st3, 1.0);
    const ExactClockTable tab = enumerate_clock(3, 2, 0.5, true);
    for (int e = 0; e < g.N; ++e) {
        const auto p = reduced_diagonal(st3, e);
        for (int m = 0; m < 3; ++m)
            CHECK(std::abs(p[m] - tab.single_prob(e, m)) < 1e-10);
    }
    const auto pp = reduced_diagonal2(st3, 0, 5);
    for (int ma = 0; ma < 3; ++ma)
        for (int mb = 0; mb < 3; ++mb)
            CHECK(std::abs(pp[ma * 3 + mb] - tab.pair_prob(0, 5, ma, mb)) < 1e-10);

    CHECK_THROWS_AS(reduced_diagonal(st3, -1), ConfigError);
    CHECK_THROWS_AS(reduced_diagonal2(st3, 1, 1), ConfigError);
}

TEST_CASE("reduced density matrices are diagonal") {
    auto g = build_lattice(2);
    QuditState st = build_kitaev_state(g, 3);
    apply_deformation(st, 0.8);
    CHECK(max_offdiagonal(st, {0}) < 1e-12);
    CHECK(max_offdiagonal(st, {3}) < 1e-12);
    CHECK(max_offdiagonal(st, {0, 5}) < 1e-12);
    CHECK(max_offdiagonal(st, {2, 7}) < 1e-12);
}

TEST_CASE("enumerate_clock basics") {
    // independent oracle: direct sum over the 16 configurations of d=2, L=2
    {
        const double T = 0.8;
        long double z = 0.0L, e_sum = 0.0L;
        for (int cfg = 0; cfg < 16; ++cfg) {
            int n[4];
            for (int v = 0; v < 4; ++v) n[v] = (cfg >> v) & 1;
            // vertices (x,y): v = y*2+x; horizontal and vertical bonds each
            // appear twice on the 2x2 torus
            double e = 0.0;
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x) {
                    const int v = y * 2 + x;
                    const int r = y * 2 + (x + 1) % 2;
                    const int u = ((y + 1) % 2) * 2 + x;
                    e -= std::cos(M_PI * (n[v] - n[r]));
                    e -= std::cos(M_PI * (n[v] - n[u]));
                }
            const long double w = std::exp(-e / T);
            z += w;
            e_sum += w * e;
        }
        const ExactClockTable tab = enumerate_clock(2, 2, T, false);
        CHECK(tab.log_z == doctest::Approx(std::log(static_cast<double>(z))).epsilon(1e-12));
        CHECK(tab.e_mean ==
              doctest::Approx(static_cast<double>(e_sum / z)).epsilon(1e-12));
    }

    // infinite-temperature limit: all configurations equiprobable
    const ExactClockTable hot = enumerate_clock(2, 2, 1e9, true);
    CHECK(hot.log_z == doctest::Approx(std::log(16.0)).epsilon(1e-6));
    for (int e = 0; e < hot.N; ++e)
        for (int m = 0; m < 2; ++m)
            CHECK(hot.single_prob(e, m) == doctest::Approx(0.5).epsilon(1e-6));

    // <E>(T) monotone non-decreasing on a grid
    double prev = -1e300;
    for (double T : {0.3, 0.6, 1.0, 1.5, 2.5, 4.0}) {
        const ExactClockTable tab = enumerate_clock(3, 2, T, false);
        CHECK(tab.e_mean >= prev - 1e-12);
        prev = tab.e_mean;
    }
}

TEST_CASE("exact GE agrees between quantum and classical routes (d=3, L=2, T=0.5)") {
    const ExactClockTable tab = enumerate_clock(3, 2, 0.5, true);
    auto g = build_lattice(2);
    QuditState st = build_kitaev_state(g, 3);
    apply_deformation(st, 1.0); // beta = 1/(2T)
    long double purity = 0.0L;
    for (int e = 0; e < g.N; ++e) {
        const auto p = reduced_diagonal(st, e);
        for (double v : p) purity += static_cast<long double>(v) * v;
    }
    const double ge_quantum =
        3.0 / 2.0 * (1.0 - static_cast<double>(purity) / g.N);
    CHECK(std::abs(ge_quantum - tab.ge) < 1e-10);
}

TEST_CASE("verify_mapping passes on small instances") {
    for (double beta : {0.2, 0.7}) {
        const MappingReport rep = verify_mapping(2, 2, beta);
        CHECK(rep.pass);
        CHECK(rep.norm_logratio_dev < 1e-10);
        CHECK(rep.max_single_dev < 1e-10);
        CHECK(rep.max_pair_dev < 1e-10);
    }
    const MappingReport rep3 = verify_mapping(3, 2, 0.5);
    CHECK(rep3.pass);

    // both global sign conventions match: spin reflection is a symmetry
    const MappingReport flipped = verify_mapping(3, 2, 0.5, EdgeConvention::TailMinusHead);
    CHECK(flipped.pass);
}

TEST_CASE("verify_mapping negative control localizes the broken convention") {
    // flipping the sign convention on vertical edges only leaves every single-
    // edge distribution intact but breaks mixed-orientation pair distributions
    const MappingReport rep = verify_mapping(3, 2, 0.5, EdgeConvention::FlipVertical);
    CHECK_FALSE(rep.pass);
    CHECK(rep.max_single_dev < 1e-10);
    CHECK(rep.max_pair_dev > 1e-6);
}

TEST_CASE("size guards") {
    auto g = build_lattice(2);
    CHECK_THROWS_AS(build_kitaev_state(g, 9), SizeGuardError);    // 9^8 > 1e7
    CHECK_THROWS_AS(enumerate_clock(5, 5, 1.0), SizeGuardError);  // 5^25
    CHECK_THROWS_AS(verify_mapping(9, 40, 1.0), SizeGuardError);
    CHECK_THROWS_AS(verify_mapping(2, 2, 0.0), ConfigError);
    const std::string j = mapping_report_json(verify_mapping(2, 2, 0.5));
    CHECK(j.find("\"pass\": true") != std::string::npos);
}
