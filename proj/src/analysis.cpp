#include "ktclock/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ktclock {

namespace {

// solve A x = b for small n with partial pivoting; A row-major, overwritten.
// Returns false when (numerically) singular.
bool solve_dense(std::vector<double>& a, std::vector<double>& b, int n) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (std::abs(a[piv * n + col]) < 1e-300) return false;
        if (piv != col) {
            for (int c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[r * n + col] * inv;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    for (int i = 0; i < n; ++i) b[i] /= a[i * n + i];
    return true;
}

bool invert_dense(std::vector<double> a, std::vector<double>& inv, int n) {
    inv.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) inv[i * n + i] = 1.0;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (std::abs(a[piv * n + col]) < 1e-300) return false;
        if (piv != col)
            for (int c = 0; c < n; ++c) {
                std::swap(a[col * n + c], a[piv * n + c]);
                std::swap(inv[col * n + c], inv[piv * n + c]);
            }
        const double ip = 1.0 / a[col * n + col];
        for (int c = 0; c < n; ++c) {
            a[col * n + c] *= ip;
            inv[col * n + c] *= ip;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[r * n + col];
            if (f == 0.0) continue;
            for (int c = 0; c < n; ++c) {
                a[r * n + c] -= f * a[col * n + c];
                inv[r * n + c] -= f * inv[col * n + c];
            }
        }
    }
    return true;
}

struct FitPoints {
    std::vector<double> x, y, w; // w = 1/err^2 (or 1)
    bool weighted = false;
};

FitPoints select_window(const Series& s, Window window) {
    FitPoints p;
    p.weighted = !s.y_err.empty();
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(s.x.size()); ++i)
        if (s.x[i] >= window.lo - 1e-12 && s.x[i] <= window.hi + 1e-12) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return s.x[a] < s.x[b]; });
    for (int i : idx) {
        p.x.push_back(s.x[i]);
        p.y.push_back(s.y[i]);
        double w = 1.0;
        if (p.weighted) {
            const double e = s.y_err[i];
            w = (e > 0.0 && std::isfinite(e)) ? 1.0 / (e * e) : 1.0;
        }
        p.w.push_back(w);
    }
    return p;
}

double median_spacing(const std::vector<double>& x) {
    std::vector<double> h;
    for (std::size_t i = 1; i < x.size(); ++i) h.push_back(x[i] - x[i - 1]);
    std::sort(h.begin(), h.end());
    return h[h.size() / 2];
}

// Gaussian-weighted local linear regression evaluated at x0; reproduces
// linear data exactly for any weights, so boundary points stay unbiased.
double local_linear(const std::vector<double>& x, const std::vector<double>& y,
                    double x0, double sigma) {
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double u = (x[j] - x0) / sigma;
        const double w = std::exp(-0.5 * u * u);
        sw += w;
        swx += w * x[j];
        swy += w * y[j];
        swxx += w * x[j] * x[j];
        swxy += w * x[j] * y[j];
    }
    const double det = sw * swxx - swx * swx;
    if (std::abs(det) < 1e-300) return swy / sw;
    const double slope = (sw * swxy - swx * swy) / det;
    const double icept = (swxx * swy - swx * swxy) / det;
    return icept + slope * x0;
}

} // namespace

void Series::validate() const {
    if (x.size() != y.size()) throw ConfigError("series: x/y length mismatch");
    if (!y_err.empty() && y_err.size() != y.size())
        throw ConfigError("series: y_err length mismatch");
    for (std::size_t i = 1; i < x.size(); ++i)
        if (!(x[i] > x[i - 1])) throw ConfigError("series: x must be strictly increasing");
}

Series derivative(const Series& s, double smooth_width) {
    s.validate();
    const int n = static_cast<int>(s.x.size());
    if (n < 5) throw ConfigError("derivative: need at least 5 points");

    std::vector<double> ys = s.y;
    if (smooth_width > 0.0) {
        const double sigma = smooth_width * median_spacing(s.x);
        for (int i = 0; i < n; ++i) ys[i] = local_linear(s.x, s.y, s.x[i], sigma);
    }

    Series out;
    out.d = s.d;
    out.L = s.L;
    out.observable = "d" + s.observable;
    out.x = s.x;
    out.y.resize(n);
    out.y[0] = (ys[1] - ys[0]) / (s.x[1] - s.x[0]);
    for (int i = 1; i + 1 < n; ++i)
        out.y[i] = (ys[i + 1] - ys[i - 1]) / (s.x[i + 1] - s.x[i - 1]);
    out.y[n - 1] = (ys[n - 1] - ys[n - 2]) / (s.x[n - 1] - s.x[n - 2]);
    return out;
}

PeakResult find_peak(const Series& s) {
    s.validate();
    const int n = static_cast<int>(s.x.size());
    if (n < 5) throw FitError("find_peak: need at least 5 points");

    int imax = 0;
    for (int i = 1; i < n; ++i)
        if (s.y[i] > s.y[imax]) imax = i;
    if (imax == 0 || imax == n - 1)
        throw FitError("find_peak: maximum lies on the window boundary");

    const int lo = std::clamp(imax - 2, 0, n - 5);
    const double x0 = s.x[imax];

    // weighted quadratic in u = x - x0
    std::vector<double> ata(9, 0.0), atb(3, 0.0);
    double wsum = 0.0;
    const bool weighted = !s.y_err.empty();
    for (int i = lo; i < lo + 5; ++i) {
        const double u = s.x[i] - x0;
        double w = 1.0;
        if (weighted && s.y_err[i] > 0.0 && std::isfinite(s.y_err[i]))
            w = 1.0 / (s.y_err[i] * s.y_err[i]);
        const double basis[3] = {u * u, u, 1.0};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) ata[r * 3 + c] += w * basis[r] * basis[c];
            atb[r] += w * basis[r] * s.y[i];
        }
        wsum += w;
    }
    std::vector<double> cov;
    if (!invert_dense(ata, cov, 3)) throw FitError("find_peak: degenerate quadratic fit");
    std::vector<double> coef(3, 0.0);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) coef[r] += cov[r * 3 + c] * atb[c];

    const double a2 = coef[0], a1 = coef[1];
    if (!(a2 < 0.0)) throw FitError("find_peak: no downward curvature at the maximum");

    double rss = 0.0;
    for (int i = lo; i < lo + 5; ++i) {
        const double u = s.x[i] - x0;
        const double f = coef[0] * u * u + coef[1] * u + coef[2];
        rss += (s.y[i] - f) * (s.y[i] - f);
    }
    const double scale = weighted ? 1.0 : rss / 2.0; // dof = 5 - 3
    const double var_a = cov[0] * scale;
    const double var_b = cov[4] * scale;
    const double cov_ab = cov[1] * scale;
    // u* = -a1/(2 a2); delta method
    const double da = a1 / (2.0 * a2 * a2);
    const double db = -1.0 / (2.0 * a2);
    double var_u = da * da * var_a + db * db * var_b + 2.0 * da * db * cov_ab;
    if (!(var_u > 0.0) || !std::isfinite(var_u)) var_u = 0.0;

    const double h_local = (s.x[imax + 1] - s.x[imax - 1]) / 2.0;

    PeakResult r;
    r.x_peak = x0 - a1 / (2.0 * a2);
    r.uncertainty = std::sqrt(h_local * h_local / 4.0 + var_u);
    return r;
}

double FitResult::operator()(double x) const {
    if (model == FitModel::Linear) return coeff[0] * x + coeff[1];
    return coeff[0] * std::pow(x, -coeff[1]) + coeff[2];
}

FitResult fit_linear(const Series& s, Window window) {
    s.validate();
    FitPoints p = select_window(s, window);
    const int n = static_cast<int>(p.x.size());
    if (n < 3) throw FitError("fit_linear: need at least 3 points in the window");

    std::vector<double> ata(4, 0.0), atb(2, 0.0);
    for (int i = 0; i < n; ++i) {
        const double basis[2] = {p.x[i], 1.0};
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) ata[r * 2 + c] += p.w[i] * basis[r] * basis[c];
            atb[r] += p.w[i] * basis[r] * p.y[i];
        }
    }
    std::vector<double> cov;
    if (!invert_dense(ata, cov, 2)) throw FitError("fit_linear: degenerate window");
    std::vector<double> coef(2, 0.0);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) coef[r] += cov[r * 2 + c] * atb[c];

    FitResult res;
    res.model = FitModel::Linear;
    res.coeff = coef;
    res.window_lo = window.lo;
    res.window_hi = window.hi;
    res.n_points = n;
    double rss = 0.0, chi2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double rr = p.y[i] - (coef[0] * p.x[i] + coef[1]);
        rss += rr * rr;
        chi2 += p.w[i] * rr * rr;
    }
    res.rss = rss;
    const double scale = p.weighted ? 1.0 : (n > 2 ? chi2 / (n - 2) : 0.0);
    res.coeff_err = {std::sqrt(std::max(0.0, cov[0] * scale)),
                     std::sqrt(std::max(0.0, cov[3] * scale))};
    return res;
}

FitResult fit_powerlaw(const Series& s, Window window) {
    s.validate();
    FitPoints p = select_window(s, window);
    const int n = static_cast<int>(p.x.size());
    if (n < 4) throw FitError("fit_powerlaw: need at least 4 points in the window");
    for (double x : p.x)
        if (!(x > 0.0)) throw FitError("fit_powerlaw: requires x > 0");
    const auto [ymin, ymax] = std::minmax_element(p.y.begin(), p.y.end());
    if (*ymax - *ymin == 0.0)
        throw FitError("fit_powerlaw: constant series, exponent unidentifiable");

    auto solve_ac = [&](double b, double& a, double& c, double& ssr) {
        double s11 = 0, s12 = 0, s22 = 0, r1 = 0, r2 = 0;
        for (int i = 0; i < n; ++i) {
            const double g = std::pow(p.x[i], -b);
            s11 += p.w[i] * g * g;
            s12 += p.w[i] * g;
            s22 += p.w[i];
            r1 += p.w[i] * g * p.y[i];
            r2 += p.w[i] * p.y[i];
        }
        const double det = s11 * s22 - s12 * s12;
        if (std::abs(det) < 1e-300) {
            a = c = 0.0;
            ssr = 1e300;
            return;
        }
        a = (s22 * r1 - s12 * r2) / det;
        c = (s11 * r2 - s12 * r1) / det;
        ssr = 0.0;
        for (int i = 0; i < n; ++i) {
            const double rr = p.y[i] - (a * std::pow(p.x[i], -b) + c);
            ssr += p.w[i] * rr * rr;
        }
    };

    // coarse exponent scan
    double best_b = 0.5, best_a = 0.0, best_c = 0.0, best_ssr = 1e300;
    for (double b = 0.5; b <= 6.0 + 1e-9; b += 0.05) {
        double a, c, ssr;
        solve_ac(b, a, c, ssr);
        if (ssr < best_ssr) {
            best_ssr = ssr;
            best_b = b;
            best_a = a;
            best_c = c;
        }
    }

    // damped Gauss-Newton refinement on (a, b, c). The exponent stays in
    // [0.5, 50): below the grid's lower edge the model degenerates toward a
    // logarithm and a, c lose their identifiability, so 0.5 acts as a bound
    // and fits of non-power-like data end up on it.
    double a = best_a, b = best_b, c = best_c;
    double ssr = best_ssr;
    double lambda = 1e-3;
    bool converged = false;
    int iterations = 0;
    int stalled = 0; // accepted steps with negligible relative progress
    for (int it = 0; it < 200 && !converged; ++it) {
        ++iterations;
        std::vector<double> jtj(9, 0.0), jtr(3, 0.0);
        for (int i = 0; i < n; ++i) {
            const double g = std::pow(p.x[i], -b);
            const double f = a * g + c;
            const double rr = f - p.y[i];
            const double jac[3] = {g, -a * std::log(p.x[i]) * g, 1.0};
            for (int r = 0; r < 3; ++r) {
                for (int cc = 0; cc < 3; ++cc) jtj[r * 3 + cc] += p.w[i] * jac[r] * jac[cc];
                jtr[r] += p.w[i] * jac[r] * rr;
            }
        }
        bool stepped = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            std::vector<double> lhs = jtj;
            for (int k = 0; k < 3; ++k) lhs[k * 3 + k] += lambda * std::max(jtj[k * 3 + k], 1e-12);
            std::vector<double> rhs = {-jtr[0], -jtr[1], -jtr[2]};
            bool usable = solve_dense(lhs, rhs, 3);
            double a_t = 0.0, b_t = 0.0, c_t = 0.0;
            if (usable) {
                a_t = a + rhs[0];
                b_t = b + rhs[1];
                c_t = c + rhs[2];
                usable = b_t >= 0.5 && b_t < 50.0;
            }
            if (usable) {
                double ssr_t = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double rr = p.y[i] - (a_t * std::pow(p.x[i], -b_t) + c_t);
                    ssr_t += p.w[i] * rr * rr;
                }
                if (ssr_t <= ssr) {
                    const double drop = ssr - ssr_t;
                    a = a_t;
                    b = b_t;
                    c = c_t;
                    ssr = ssr_t;
                    lambda = std::max(lambda / 3.0, 1e-12);
                    stepped = true;
                    stalled = drop <= 1e-10 * std::max(ssr, 1e-30) ? stalled + 1 : 0;
                    if (drop <= 1e-15 * std::max(ssr, 1e-30) || stalled >= 5 ||
                        (std::abs(rhs[0]) < 1e-12 * std::max(1.0, std::abs(a)) &&
                         std::abs(rhs[1]) < 1e-12 * std::max(1.0, std::abs(b)) &&
                         std::abs(rhs[2]) < 1e-12 * std::max(1.0, std::abs(c))))
                        converged = true;
                    break;
                }
            }
            lambda *= 10.0;
            if (lambda > 1e14) break;
        }
        if (!stepped) converged = true; // numerically stationary, possibly on the bound
    }
    if (!converged)
        throw FitError("fit_powerlaw: no convergence after " + std::to_string(iterations) +
                       " iterations (ssr=" + std::to_string(ssr) + ")");
    if (!(a > 0.0) || !(b > 0.0))
        throw FitError("fit_powerlaw: converged outside the valid region (a,b > 0)");

    FitResult res;
    res.model = FitModel::ShiftedPowerLaw;
    res.coeff = {a, b, c};
    res.window_lo = window.lo;
    res.window_hi = window.hi;
    res.n_points = n;

    std::vector<double> jtj(9, 0.0);
    double rss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = std::pow(p.x[i], -b);
        const double jac[3] = {g, -a * std::log(p.x[i]) * g, 1.0};
        for (int r = 0; r < 3; ++r)
            for (int cc = 0; cc < 3; ++cc) jtj[r * 3 + cc] += p.w[i] * jac[r] * jac[cc];
        const double rr = p.y[i] - (a * g + c);
        rss += rr * rr;
    }
    res.rss = rss;
    std::vector<double> cov;
    res.coeff_err = {0.0, 0.0, 0.0};
    if (invert_dense(jtj, cov, 3)) {
        const double scale = p.weighted ? 1.0 : (n > 3 ? ssr / (n - 3) : 0.0);
        for (int k = 0; k < 3; ++k)
            res.coeff_err[k] = std::sqrt(std::max(0.0, cov[k * 3 + k] * scale));
    }
    return res;
}

double intersect_fits(const FitResult& linear, const FitResult& power, Window bracket) {
    auto f = [&](double x) { return linear(x) - power(x); };
    double lo = bracket.lo, hi = bracket.hi;
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0))
        throw FitError("intersect_fits: no sign change over the bracket");
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

std::optional<Window> scan_intersection_bracket(const FitResult& linear,
                                                const FitResult& power, Window window,
                                                int n) {
    auto f = [&](double x) { return linear(x) - power(x); };
    double x_prev = window.lo;
    double f_prev = f(x_prev);
    for (int i = 1; i <= n; ++i) {
        const double x = window.lo + (window.hi - window.lo) * i / n;
        const double fx = f(x);
        if (f_prev == 0.0 || (f_prev > 0.0) != (fx > 0.0))
            return Window{x_prev, x};
        x_prev = x;
        f_prev = fx;
    }
    return std::nullopt;
}

double intersect_uncertainty(const FitResult& linear, const FitResult& power,
                             double x_star) {
    if (linear.model != FitModel::Linear || power.model != FitModel::ShiftedPowerLaw)
        throw ConfigError("intersect_uncertainty: expected a linear/power pair");
    const double a = power.coeff[0], b = power.coeff[1];
    const double g = std::pow(x_star, -b);
    // root condition f(x; theta) = lin(x) - pow(x) = 0
    const double df_dx = linear.coeff[0] + a * b * std::pow(x_star, -b - 1.0);
    double var = 0.0;
    auto add = [&var](double sens, double err) { var += sens * sens * err * err; };
    if (!linear.coeff_err.empty()) {
        add(x_star, linear.coeff_err[0]);
        add(1.0, linear.coeff_err[1]);
    }
    if (!power.coeff_err.empty()) {
        add(-g, power.coeff_err[0]);
        add(a * std::log(x_star) * g, power.coeff_err[1]);
        add(-1.0, power.coeff_err[2]);
    }
    if (df_dx == 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(var) / std::abs(df_dx);
}

CrossingResult cumulant_crossing(const std::vector<Series>& series,
                                 std::optional<Window> window) {
    if (series.size() < 2)
        throw ConfigError("cumulant_crossing: need at least two system sizes");
    for (const auto& s : series) s.validate();

    CrossingResult out;
    for (std::size_t i = 0; i < series.size(); ++i)
        for (std::size_t j = i + 1; j < series.size(); ++j) {
            const Series& a = series[i];
            const Series& b = series[j];
            // common grid points (exact x matches)
            std::vector<double> xs, da;
            for (std::size_t k = 0; k < a.x.size(); ++k) {
                if (window && (a.x[k] < window->lo - 1e-12 || a.x[k] > window->hi + 1e-12))
                    continue;
                for (std::size_t l = 0; l < b.x.size(); ++l)
                    if (std::abs(a.x[k] - b.x[l]) < 1e-9) {
                        xs.push_back(a.x[k]);
                        da.push_back(a.y[k] - b.y[l]);
                        break;
                    }
            }
            if (xs.size() < 2)
                throw ConfigError("cumulant_crossing: fewer than two shared grid points");
            // start where the curves are most separated (just off criticality)
            // and scan toward higher T first; near-degenerate stretches where
            // both curves collapse are then never reached
            int k0 = 0;
            for (int k = 1; k < static_cast<int>(xs.size()); ++k)
                if (std::abs(da[k]) > std::abs(da[k0])) k0 = k;
            auto root_at = [&](int k) {
                const double f0 = da[k], f1 = da[k + 1];
                if (f1 == 0.0) return xs[k + 1];
                return xs[k] + f0 / (f0 - f1) * (xs[k + 1] - xs[k]);
            };
            bool found = false;
            for (int k = k0; k + 1 < static_cast<int>(xs.size()) && !found; ++k)
                if ((da[k] > 0.0) != (da[k + 1] > 0.0) || da[k + 1] == 0.0) {
                    out.pairwise.push_back(root_at(k));
                    found = true;
                }
            for (int k = k0 - 1; k >= 0 && !found; --k)
                if ((da[k] > 0.0) != (da[k + 1] > 0.0) || da[k + 1] == 0.0) {
                    out.pairwise.push_back(root_at(k));
                    found = true;
                }
            if (!found)
                throw ConfigError("cumulant_crossing: no crossing in the window for sizes L=" +
                                  std::to_string(a.L) + ", L=" + std::to_string(b.L));
        }

    out.t_c = std::accumulate(out.pairwise.begin(), out.pairwise.end(), 0.0) /
              static_cast<double>(out.pairwise.size());
    const auto [mn, mx] = std::minmax_element(out.pairwise.begin(), out.pairwise.end());
    out.spread = *mx - *mn;
    return out;
}

} // namespace ktclock
