#include "ktclock/quantum_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "json.hpp"

#include "ktclock/clock_mc.hpp"

namespace ktclock {

namespace {

std::vector<std::int64_t> digit_powers(int d, int n) {
    std::vector<std::int64_t> p(static_cast<std::size_t>(n) + 1);
    p[0] = 1;
    for (int i = 0; i < n; ++i) p[i + 1] = p[i] * d;
    return p;
}

inline int digit(std::int64_t b, std::int64_t power, int d) {
    return static_cast<int>((b / power) % d);
}

// edge variable of a classical spin config under a convention
inline int classical_edge_value(int n_tail, int n_head, int orientation, int d,
                                EdgeConvention conv) {
    int m = ((n_head - n_tail) % d + d) % d;
    const bool flip = conv == EdgeConvention::TailMinusHead ||
                      (conv == EdgeConvention::FlipVertical && orientation == kVertical);
    return flip ? (d - m) % d : m;
}

} // namespace

std::int64_t guarded_power(int d, int n, std::int64_t limit, const char* what) {
    std::int64_t v = 1;
    for (int i = 0; i < n; ++i) {
        if (v > limit / d)
            throw SizeGuardError(std::string(what) + ": " + std::to_string(d) + "^" +
                                 std::to_string(n) + " exceeds the size guard (" +
                                 std::to_string(limit) + ")");
        v *= d;
    }
    return v;
}

QuditState build_kitaev_state(const LatticeGeometry& geom, int d) {
    if (d < 2) throw ConfigError("build_kitaev_state: d must be >= 2");
    const std::int64_t dim = guarded_power(d, geom.N, kMaxStateDim, "build_kitaev_state");
    const auto pw = digit_powers(d, geom.N);

    QuditState st;
    st.d = d;
    st.n_qudits = geom.N;
    st.amp.assign(static_cast<std::size_t>(dim), {0.0, 0.0});
    st.amp[0] = {1.0, 0.0};

    std::vector<std::complex<double>> next(static_cast<std::size_t>(dim));
    for (int v = 0; v < geom.V; ++v) {
        std::fill(next.begin(), next.end(), std::complex<double>{0.0, 0.0});
        const SignedEdge* star = geom.star_of(v);
        for (int k = 0; k < d; ++k) {
            // shift of each star digit by +-k, as an index offset
            for (std::int64_t b = 0; b < dim; ++b) {
                const std::complex<double> a = st.amp[static_cast<std::size_t>(b)];
                if (a.real() == 0.0 && a.imag() == 0.0) continue;
                std::int64_t target = b;
                for (int s = 0; s < 4; ++s) {
                    const int e = star[s].edge;
                    const int m = digit(b, pw[e], d);
                    const int m2 = ((m + star[s].sign * k) % d + d) % d;
                    target += static_cast<std::int64_t>(m2 - m) * pw[e];
                }
                next[static_cast<std::size_t>(target)] += a;
            }
        }
        st.amp.swap(next);
    }

    long double norm2 = 0.0L;
    for (const auto& a : st.amp) norm2 += static_cast<long double>(std::norm(a));
    const double inv = 1.0 / std::sqrt(static_cast<double>(norm2));
    for (auto& a : st.amp) a *= inv;
    return st;
}

void apply_vertex_op(const LatticeGeometry& geom, QuditState& state, int v, int power) {
    const int d = state.d;
    const auto pw = digit_powers(d, state.n_qudits);
    const SignedEdge* star = geom.star_of(v);
    std::vector<std::complex<double>> out(state.amp.size(), {0.0, 0.0});
    const std::int64_t dim = state.dim();
    for (std::int64_t b = 0; b < dim; ++b) {
        std::int64_t target = b;
        for (int s = 0; s < 4; ++s) {
            const int e = star[s].edge;
            const int m = digit(b, pw[e], d);
            const int m2 = ((m + star[s].sign * power) % d + d) % d;
            target += static_cast<std::int64_t>(m2 - m) * pw[e];
        }
        out[static_cast<std::size_t>(target)] = state.amp[static_cast<std::size_t>(b)];
    }
    state.amp.swap(out);
}

void apply_plaquette_op(const LatticeGeometry& geom, QuditState& state, int p) {
    const int d = state.d;
    const auto pw = digit_powers(d, state.n_qudits);
    const SignedEdge* plq = geom.plaquette_of(p);
    const std::int64_t dim = state.dim();
    for (std::int64_t b = 0; b < dim; ++b) {
        int flux = 0;
        for (int s = 0; s < 4; ++s)
            flux += plq[s].sign * digit(b, pw[plq[s].edge], d);
        const double angle = 2.0 * M_PI * flux / d;
        state.amp[static_cast<std::size_t>(b)] *= std::polar(1.0, angle);
    }
}

double apply_deformation(QuditState& state, double beta) {
    if (beta < 0.0) throw ConfigError("apply_deformation: beta must be >= 0");
    const int d = state.d;
    const auto pw = digit_powers(d, state.n_qudits);
    const auto cos_t = make_cos_table(d);
    const std::int64_t dim = state.dim();

    std::vector<double> exponent(static_cast<std::size_t>(dim));
    double e_max = -1e300;
    for (std::int64_t b = 0; b < dim; ++b) {
        double s = 0.0;
        for (int e = 0; e < state.n_qudits; ++e)
            s += cos_t[static_cast<std::size_t>(digit(b, pw[e], d))];
        const double ex = beta * s;
        exponent[static_cast<std::size_t>(b)] = ex;
        e_max = std::max(e_max, ex);
    }

    long double norm2 = 0.0L;
    for (std::int64_t b = 0; b < dim; ++b) {
        auto& a = state.amp[static_cast<std::size_t>(b)];
        a *= std::exp(exponent[static_cast<std::size_t>(b)] - e_max);
        norm2 += static_cast<long double>(std::norm(a));
    }
    const double log_norm2 =
        std::log(static_cast<double>(norm2)) + 2.0 * e_max;
    const double inv = 1.0 / std::sqrt(static_cast<double>(norm2));
    for (auto& a : state.amp) a *= inv;
    return log_norm2;
}

std::vector<double> reduced_diagonal(const QuditState& state, int edge) {
    const int d = state.d;
    if (edge < 0 || edge >= state.n_qudits)
        throw ConfigError("reduced_diagonal: edge out of range");
    const auto pw = digit_powers(d, state.n_qudits);
    std::vector<long double> acc(static_cast<std::size_t>(d), 0.0L);
    const std::int64_t dim = state.dim();
    for (std::int64_t b = 0; b < dim; ++b)
        acc[static_cast<std::size_t>(digit(b, pw[edge], d))] +=
            static_cast<long double>(std::norm(state.amp[static_cast<std::size_t>(b)]));
    long double total = 0.0L;
    for (auto v : acc) total += v;
    std::vector<double> out(static_cast<std::size_t>(d));
    for (int m = 0; m < d; ++m) out[m] = static_cast<double>(acc[m] / total);
    return out;
}

std::vector<double> reduced_diagonal2(const QuditState& state, int edge_a, int edge_b) {
    const int d = state.d;
    if (edge_a < 0 || edge_a >= state.n_qudits || edge_b < 0 || edge_b >= state.n_qudits)
        throw ConfigError("reduced_diagonal2: edge out of range");
    if (edge_a == edge_b) throw ConfigError("reduced_diagonal2: edges must differ");
    const auto pw = digit_powers(d, state.n_qudits);
    std::vector<long double> acc(static_cast<std::size_t>(d) * d, 0.0L);
    const std::int64_t dim = state.dim();
    for (std::int64_t b = 0; b < dim; ++b) {
        const int ma = digit(b, pw[edge_a], d);
        const int mb = digit(b, pw[edge_b], d);
        acc[static_cast<std::size_t>(ma) * d + mb] +=
            static_cast<long double>(std::norm(state.amp[static_cast<std::size_t>(b)]));
    }
    long double total = 0.0L;
    for (auto v : acc) total += v;
    std::vector<double> out(static_cast<std::size_t>(d) * d);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<double>(acc[k] / total);
    return out;
}

double max_offdiagonal(const QuditState& state, const std::vector<int>& edges) {
    if (edges.empty() || edges.size() > 2)
        throw ConfigError("max_offdiagonal: expected one or two edges");
    const int d = state.d;
    const auto pw = digit_powers(d, state.n_qudits);
    const std::int64_t dim = state.dim();

    const int n_states = edges.size() == 1 ? d : d * d;
    std::vector<std::complex<long double>> rho(
        static_cast<std::size_t>(n_states) * n_states, {0.0L, 0.0L});

    for (std::int64_t b = 0; b < dim; ++b) {
        const std::complex<double> ab = state.amp[static_cast<std::size_t>(b)];
        int row;
        if (edges.size() == 1) {
            row = digit(b, pw[edges[0]], d);
        } else {
            row = digit(b, pw[edges[0]], d) * d + digit(b, pw[edges[1]], d);
        }
        for (int col = 0; col < n_states; ++col) {
            if (col == row) continue;
            std::int64_t partner = b;
            if (edges.size() == 1) {
                partner += static_cast<std::int64_t>(col - row) * pw[edges[0]];
            } else {
                partner += static_cast<std::int64_t>(col / d - row / d) * pw[edges[0]];
                partner += static_cast<std::int64_t>(col % d - row % d) * pw[edges[1]];
            }
            const std::complex<double> ac = state.amp[static_cast<std::size_t>(partner)];
            rho[static_cast<std::size_t>(row) * n_states + col] +=
                std::complex<long double>(ab) * std::conj(std::complex<long double>(ac));
        }
    }

    double worst = 0.0;
    for (int r = 0; r < n_states; ++r)
        for (int c = 0; c < n_states; ++c) {
            if (r == c) continue;
            worst = std::max(worst, static_cast<double>(std::abs(
                                        rho[static_cast<std::size_t>(r) * n_states + c])));
        }
    return worst;
}

ExactClockTable enumerate_clock(int d, int L, double T, bool with_pairs,
                                EdgeConvention conv) {
    if (d < 2) throw ConfigError("enumerate_clock: d must be >= 2");
    if (!(T > 0.0)) throw ConfigError("enumerate_clock: T must be positive");
    const LatticeGeometry geom = build_lattice(L);
    const std::int64_t n_configs =
        guarded_power(d, geom.V, kMaxEnumConfigs, "enumerate_clock");

    ExactClockTable tab;
    tab.d = d;
    tab.L = L;
    tab.V = geom.V;
    tab.N = geom.N;
    tab.T = T;
    tab.has_pairs = with_pairs;

    const auto cos_t = make_cos_table(d);
    std::vector<double> vcos(static_cast<std::size_t>(d)), vsin(static_cast<std::size_t>(d));
    for (int m = 0; m < d; ++m) {
        vcos[m] = std::cos(2.0 * M_PI * m / d);
        vsin[m] = std::sin(2.0 * M_PI * m / d);
    }

    const double inv_t = 1.0 / T;
    const double shift = geom.N * inv_t; // max of sum(cos)/T

    long double z = 0.0L, e_acc = 0.0L, e2_acc = 0.0L, m2_acc = 0.0L, m4_acc = 0.0L;
    std::vector<long double> single_acc(static_cast<std::size_t>(geom.N) * d, 0.0L);
    std::vector<long double> pair_acc;
    const int dd = d * d;
    if (with_pairs)
        pair_acc.assign(static_cast<std::size_t>(geom.N) * geom.N * dd, 0.0L);

    std::vector<std::uint8_t> spins(static_cast<std::size_t>(geom.V), 0);
    std::vector<std::uint8_t> edge_val(static_cast<std::size_t>(geom.N), 0);

    for (std::int64_t cfg = 0; cfg < n_configs; ++cfg) {
        double sum_cos = 0.0;
        for (int e = 0; e < geom.N; ++e) {
            const int nt = spins[geom.edge_tail[e]];
            const int nh = spins[geom.edge_head[e]];
            sum_cos += cos_t[static_cast<std::size_t>(((nt - nh) % d + d) % d)];
            edge_val[static_cast<std::size_t>(e)] = static_cast<std::uint8_t>(
                classical_edge_value(nt, nh, geom.edge_orientation(e), d, conv));
        }
        const long double w =
            static_cast<long double>(std::exp(sum_cos * inv_t - shift));
        const double energy_cfg = -sum_cos;

        z += w;
        e_acc += w * energy_cfg;
        e2_acc += w * energy_cfg * energy_cfg;

        double sx = 0.0, sy = 0.0;
        for (int v = 0; v < geom.V; ++v) {
            sx += vcos[spins[v]];
            sy += vsin[spins[v]];
        }
        const double m_phi = std::cos(d * std::atan2(sy, sx));
        m2_acc += w * m_phi * m_phi;
        m4_acc += w * m_phi * m_phi * m_phi * m_phi;

        for (int e = 0; e < geom.N; ++e)
            single_acc[static_cast<std::size_t>(e) * d + edge_val[e]] += w;
        if (with_pairs) {
            for (int a = 0; a < geom.N; ++a) {
                const int ma = edge_val[a];
                for (int b = a + 1; b < geom.N; ++b)
                    pair_acc[((static_cast<std::size_t>(a) * geom.N + b) * d + ma) * d +
                             edge_val[b]] += w;
            }
        }

        // odometer increment
        for (int v = 0; v < geom.V; ++v) {
            if (++spins[v] < d) break;
            spins[v] = 0;
        }
    }

    tab.log_z = std::log(static_cast<double>(z)) + shift;
    tab.e_mean = static_cast<double>(e_acc / z);
    tab.e2_mean = static_cast<double>(e2_acc / z);
    tab.cv = (tab.e2_mean - tab.e_mean * tab.e_mean) / (geom.V * T * T);
    tab.um2 = static_cast<double>(m2_acc / z);
    tab.um4 = static_cast<double>(m4_acc / z);
    tab.um = 1.0 - tab.um4 / (2.0 * tab.um2 * tab.um2);

    tab.single.resize(single_acc.size());
    for (std::size_t i = 0; i < single_acc.size(); ++i)
        tab.single[i] = static_cast<double>(single_acc[i] / z);

    long double purity1 = 0.0L;
    for (int a = 0; a < geom.N; ++a)
        for (int m = 0; m < d; ++m) {
            const long double p = single_acc[static_cast<std::size_t>(a) * d + m] / z;
            purity1 += p * p;
        }
    tab.ge = static_cast<double>(d) / (d - 1.0) *
             (1.0 - static_cast<double>(purity1) / geom.N);

    if (with_pairs) {
        tab.pair.assign(static_cast<std::size_t>(geom.N) * geom.N * dd, 0.0);
        long double purity2 = 0.0L;
        for (int a = 0; a < geom.N; ++a)
            for (int b = a + 1; b < geom.N; ++b)
                for (int ma = 0; ma < d; ++ma)
                    for (int mb = 0; mb < d; ++mb) {
                        const long double p =
                            pair_acc[((static_cast<std::size_t>(a) * geom.N + b) * d + ma) *
                                     d + mb] / z;
                        const double pd = static_cast<double>(p);
                        tab.pair[((static_cast<std::size_t>(a) * geom.N + b) * d + ma) * d +
                                 mb] = pd;
                        tab.pair[((static_cast<std::size_t>(b) * geom.N + a) * d + mb) * d +
                                 ma] = pd;
                        purity2 += 2.0L * p * p; // both orders
                    }
        const double d2 = static_cast<double>(d) * d;
        const double nn = static_cast<double>(geom.N) * (geom.N - 1.0);
        tab.get = d2 / (d2 - 1.0) * (1.0 - static_cast<double>(purity2) / nn);
        tab.q = tab.get - tab.ge;
    }
    return tab;
}

MappingReport verify_mapping(int d, int L, double beta, EdgeConvention conv) {
    if (!(beta > 0.0)) throw ConfigError("verify_mapping: beta must be positive");
    const LatticeGeometry geom = build_lattice(L);
    guarded_power(d, geom.N, kMaxStateDim, "verify_mapping (state)");
    guarded_power(d, geom.V, kMaxEnumConfigs, "verify_mapping (enumeration)");

    MappingReport rep;
    rep.d = d;
    rep.L = L;
    rep.beta = beta;
    rep.beta_ref = beta / 2.0;
    rep.T = 1.0 / (2.0 * beta);
    rep.T_ref = 1.0 / (2.0 * rep.beta_ref);
    rep.tolerance = 1e-10;

    const QuditState base = build_kitaev_state(geom, d);
    QuditState st = base;
    const double log_n2 = apply_deformation(st, beta);
    QuditState st_ref = base;
    const double log_n2_ref = apply_deformation(st_ref, rep.beta_ref);

    const ExactClockTable tab = enumerate_clock(d, L, rep.T, true, conv);
    const ExactClockTable tab_ref = enumerate_clock(d, L, rep.T_ref, false, conv);

    rep.norm_logratio_dev =
        std::abs((log_n2 - log_n2_ref) - (tab.log_z - tab_ref.log_z));

    // single-edge diagonals
    for (int e = 0; e < geom.N; ++e) {
        const auto p = reduced_diagonal(st, e);
        for (int m = 0; m < d; ++m) {
            const double dev = std::abs(p[m] - tab.single_prob(e, m));
            if (dev > rep.max_single_dev) {
                rep.max_single_dev = dev;
                rep.worst_single_edge = e;
                rep.worst_single_m = m;
            }
        }
    }

    // all two-edge diagonals in one pass over the amplitudes
    const auto pw = digit_powers(d, geom.N);
    const int dd = d * d;
    std::vector<long double> acc(static_cast<std::size_t>(geom.N) * geom.N * dd, 0.0L);
    std::vector<int> digits(static_cast<std::size_t>(geom.N));
    const std::int64_t dim = st.dim();
    for (std::int64_t b = 0; b < dim; ++b) {
        const long double w = static_cast<long double>(std::norm(st.amp[b]));
        if (w == 0.0L) continue;
        std::int64_t rest = b;
        for (int e = 0; e < geom.N; ++e) {
            digits[e] = static_cast<int>(rest % d);
            rest /= d;
        }
        for (int a = 0; a < geom.N; ++a)
            for (int b2 = a + 1; b2 < geom.N; ++b2)
                acc[((static_cast<std::size_t>(a) * geom.N + b2) * d + digits[a]) * d +
                    digits[b2]] += w;
    }
    long double wtot = 0.0L;
    for (std::int64_t b = 0; b < dim; ++b)
        wtot += static_cast<long double>(std::norm(st.amp[b]));
    for (int a = 0; a < geom.N; ++a)
        for (int b2 = a + 1; b2 < geom.N; ++b2)
            for (int ma = 0; ma < d; ++ma)
                for (int mb = 0; mb < d; ++mb) {
                    const double q = static_cast<double>(
                        acc[((static_cast<std::size_t>(a) * geom.N + b2) * d + ma) * d + mb] /
                        wtot);
                    const double dev = std::abs(q - tab.pair_prob(a, b2, ma, mb));
                    if (dev > rep.max_pair_dev) {
                        rep.max_pair_dev = dev;
                        rep.worst_pair_a = a;
                        rep.worst_pair_b = b2;
                        rep.worst_pair_ma = ma;
                        rep.worst_pair_mb = mb;
                    }
                }

    rep.pass = rep.norm_logratio_dev < rep.tolerance &&
               rep.max_single_dev < rep.tolerance && rep.max_pair_dev < rep.tolerance;
    return rep;
}

std::string mapping_report_json(const MappingReport& r) {
    nlohmann::json j;
    j["d"] = r.d;
    j["L"] = r.L;
    j["beta"] = r.beta;
    j["beta_ref"] = r.beta_ref;
    j["T"] = r.T;
    j["T_ref"] = r.T_ref;
    j["norm_logratio_dev"] = r.norm_logratio_dev;
    j["max_single_dev"] = r.max_single_dev;
    j["worst_single"] = {{"edge", r.worst_single_edge}, {"m", r.worst_single_m}};
    j["max_pair_dev"] = r.max_pair_dev;
    j["worst_pair"] = {{"a", r.worst_pair_a},
                       {"b", r.worst_pair_b},
                       {"ma", r.worst_pair_ma},
                       {"mb", r.worst_pair_mb}};
    j["tolerance"] = r.tolerance;
    j["pass"] = r.pass;
    return j.dump(2);
}

} // namespace ktclock
