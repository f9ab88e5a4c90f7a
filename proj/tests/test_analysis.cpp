#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ktclock/analysis.hpp"
#include "ktclock/rng.hpp"

using namespace ktclock;

namespace {

Series make_series(std::vector<double> x, std::vector<double> y,
                   std::vector<double> err = {}) {
    Series s;
    s.x = std::move(x);
    s.y = std::move(y);
    s.y_err = std::move(err);
    s.observable = "test";
    return s;
}

std::vector<double> grid(double lo, double hi, int n) {
    std::vector<double> x;
    for (int i = 0; i < n; ++i) x.push_back(lo + (hi - lo) * i / (n - 1));
    return x;
}

// reference fitted-function pairs used across the fit tests
struct CurvePair {
    double lin_a, lin_b;
    double pow_a, pow_b, pow_c;
    double expected_intersection;
};
const CurvePair kCurves[] = {
    {-0.0970, 0.2312, 0.1018, 2.358, 0.02804, 0.97}, // d = 9
    {-0.1013, 0.2359, 0.1047, 2.321, 0.02879, 0.99}, // d = 8
    {-0.1031, 0.2404, 0.1067, 2.289, 0.02943, 0.99}, // d = 7
};

} // namespace

TEST_CASE("series validation") {
    Series bad = make_series({0.1, 0.1, 0.3}, {1, 2, 3});
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    Series mismatch = make_series({0.1, 0.2}, {1, 2, 3});
    CHECK_THROWS_AS(mismatch.validate(), ConfigError);
}

TEST_CASE("derivative of a line is the slope everywhere") {
    const auto x = grid(0.0, 2.0, 17);
    std::vector<double> y;
    for (double xi : x) y.push_back(3.0 * xi + 1.0);
    const Series d = derivative(make_series(x, y));
    for (double v : d.y) CHECK(v == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("derivative of x^2 is 2x at interior points within O(h^2)") {
    const double h = 0.1;
    const auto x = grid(0.0, 2.0, 21);
    std::vector<double> y;
    for (double xi : x) y.push_back(xi * xi);
    const Series d = derivative(make_series(x, y));
    for (int i = 3; i < 18; ++i)
        CHECK(std::abs(d.y[i] - 2.0 * x[i]) < 2.0 * h * h);
}

TEST_CASE("derivative of a cumulative sum returns the integrand") {
    const int n = 41;
    const auto x = grid(0.0, 2.0, n);
    const double h = x[1] - x[0];
    std::vector<double> y, z(n, 0.0);
    for (double xi : x) y.push_back(std::sin(2.0 * xi));
    for (int i = 1; i < n; ++i) z[i] = z[i - 1] + 0.5 * (y[i] + y[i - 1]) * h;
    const Series d = derivative(make_series(x, z));
    for (int i = 4; i < n - 4; ++i)
        CHECK(std::abs(d.y[i] - y[i]) < 8.0 * h * h);
}

TEST_CASE("derivative error cases") {
    CHECK_THROWS_AS(derivative(make_series({1, 2, 3, 4}, {1, 2, 3, 4})), ConfigError);
}

TEST_CASE("find_peak recovers an exact parabola vertex") {
    const auto x = grid(0.1, 0.7, 13);
    std::vector<double> y;
    for (double xi : x) y.push_back(1.0 - 5.0 * (xi - 0.4) * (xi - 0.4));
    const PeakResult p = find_peak(make_series(x, y));
    CHECK(std::abs(p.x_peak - 0.4) < 1e-12);
    CHECK(p.uncertainty >= 0.024); // at least half a grid spacing
}

TEST_CASE("find_peak is invariant under shifts and positive rescaling of y") {
    const auto x = grid(0.0, 1.0, 11);
    std::vector<double> y;
    Rng rng(40);
    for (double xi : x) y.push_back(-(xi - 0.52) * (xi - 0.52) + 0.01 * rng.uniform01());
    const PeakResult base = find_peak(make_series(x, y));
    std::vector<double> shifted, scaled;
    for (double v : y) shifted.push_back(v + 7.5);
    for (double v : y) scaled.push_back(3.0 * v);
    CHECK(find_peak(make_series(x, shifted)).x_peak ==
          doctest::Approx(base.x_peak).epsilon(1e-12));
    // rescaling y rescales the quadratic coefficients together; the argmax of
    // 3*y differs from that of y only through rounding
    CHECK(find_peak(make_series(x, scaled)).x_peak ==
          doctest::Approx(base.x_peak).epsilon(1e-9));
}

TEST_CASE("find_peak rejects boundary maxima") {
    const auto x = grid(0.0, 1.0, 9);
    std::vector<double> rising;
    for (double xi : x) rising.push_back(xi);
    CHECK_THROWS_AS(find_peak(make_series(x, rising)), FitError);
    std::vector<double> falling;
    for (double xi : x) falling.push_back(-xi);
    CHECK_THROWS_AS(find_peak(make_series(x, falling)), FitError);
}

TEST_CASE("fit_linear recovers reference coefficients exactly on noiseless data") {
    for (const CurvePair& c : kCurves) {
        const auto x = grid(0.4, 0.85, 12);
        std::vector<double> y;
        for (double xi : x) y.push_back(c.lin_a * xi + c.lin_b);
        const FitResult f = fit_linear(make_series(x, y), {0.3, 0.9});
        CHECK(std::abs(f.coeff[0] - c.lin_a) < 1e-12);
        CHECK(std::abs(f.coeff[1] - c.lin_b) < 1e-12);
        CHECK(f.rss < 1e-8);
    }
}

TEST_CASE("fit_linear rejects degenerate windows") {
    const auto x = grid(0.0, 1.0, 11);
    std::vector<double> y(11, 1.0);
    CHECK_THROWS_AS(fit_linear(make_series(x, y), {0.0, 0.05}), FitError); // 1 point
    CHECK_THROWS_AS(fit_linear(make_series(x, y), {0.0, 0.15}), FitError); // 2 points
}

TEST_CASE("fit_linear generate-and-refit with noise lands within 3 uncertainties") {
    Rng rng(808);
    const auto x = grid(0.3, 0.9, 20);
    std::vector<double> y, err;
    for (double xi : x) {
        const double clean = -0.097 * xi + 0.2312;
        const double sigma = 0.01 * std::abs(clean);
        // sum of 12 uniforms, variance 1
        double g = -6.0;
        for (int k = 0; k < 12; ++k) g += rng.uniform01();
        y.push_back(clean + sigma * g);
        err.push_back(sigma);
    }
    const FitResult f = fit_linear(make_series(x, y, err), {0.2, 1.0});
    CHECK(std::abs(f.coeff[0] - (-0.097)) < 3.0 * f.coeff_err[0]);
    CHECK(std::abs(f.coeff[1] - 0.2312) < 3.0 * f.coeff_err[1]);
}

TEST_CASE("fit_powerlaw recovers the reference curves to 1e-6") {
    for (const CurvePair& c : kCurves) {
        const auto x = grid(1.05, 2.0, 20);
        std::vector<double> y;
        for (double xi : x) y.push_back(c.pow_a * std::pow(xi, -c.pow_b) + c.pow_c);
        const FitResult f = fit_powerlaw(make_series(x, y), {1.0, 2.1});
        CHECK(std::abs(f.coeff[0] - c.pow_a) < 1e-6);
        CHECK(std::abs(f.coeff[1] - c.pow_b) < 1e-6);
        CHECK(std::abs(f.coeff[2] - c.pow_c) < 1e-6);
        CHECK(f.rss < 1e-8);
    }
}

TEST_CASE("fit_powerlaw failure modes") {
    const auto x = grid(1.0, 2.0, 11);
    std::vector<double> flat(11, 0.25);
    CHECK_THROWS_AS(fit_powerlaw(make_series(x, flat), {0.9, 2.1}), FitError);
    std::vector<double> y;
    for (double xi : x) y.push_back(0.1 * std::pow(xi, -2.0) + 0.02);
    CHECK_THROWS_AS(fit_powerlaw(make_series(x, y), {0.9, 1.25}), FitError); // 3 points
    Series with_zero = make_series(grid(0.0, 2.0, 11), std::vector<double>(11, 1.0));
    for (std::size_t i = 0; i < with_zero.x.size(); ++i)
        with_zero.y[i] = 0.1 * std::pow(with_zero.x[i] + 0.3, -2.0);
    CHECK_THROWS_AS(fit_powerlaw(with_zero, {-0.1, 2.1}), FitError); // x = 0 inside
}

TEST_CASE("fits are invariant under reordering of input points") {
    Rng rng(606);
    std::vector<double> x = grid(0.5, 1.9, 15);
    std::vector<double> y;
    for (double xi : x) y.push_back(0.11 * std::pow(xi, -2.1) + 0.03 + 1e-4 * rng.uniform01());
    const FitResult base_l = fit_linear(make_series(x, y), {0.4, 2.0});
    const FitResult base_p = fit_powerlaw(make_series(x, y), {0.4, 2.0});

    // reversed point order (validate() forbids non-monotone x, so feed a
    // reversed copy through a permuted construction)
    std::vector<std::size_t> perm(x.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = perm.size() - 1 - i;
    Series rev;
    rev.observable = "test";
    for (std::size_t i : perm) {
        rev.x.push_back(x[i]);
        rev.y.push_back(y[i]);
    }
    std::reverse(rev.x.begin(), rev.x.end());
    std::reverse(rev.y.begin(), rev.y.end());
    const FitResult again_l = fit_linear(rev, {0.4, 2.0});
    const FitResult again_p = fit_powerlaw(rev, {0.4, 2.0});
    CHECK(base_l.coeff == again_l.coeff);
    CHECK(base_p.coeff == again_p.coeff);
}

TEST_CASE("intersect_fits on an analytic pair") {
    FitResult lin;
    lin.model = FitModel::Linear;
    lin.coeff = {1.0, 0.0}; // y = x
    FitResult pow;
    pow.model = FitModel::ShiftedPowerLaw;
    pow.coeff = {1.0, 1.0, 0.0}; // y = 1/x
    CHECK(intersect_fits(lin, pow, {0.5, 2.0}) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(intersect_fits(lin, pow, {1.5, 2.0}), FitError); // no sign change
}

TEST_CASE("reference curve pairs intersect near the expected control values") {
    for (const CurvePair& c : kCurves) {
        FitResult lin;
        lin.model = FitModel::Linear;
        lin.coeff = {c.lin_a, c.lin_b};
        FitResult pow;
        pow.model = FitModel::ShiftedPowerLaw;
        pow.coeff = {c.pow_a, c.pow_b, c.pow_c};
        const double x = intersect_fits(lin, pow, {0.6, 1.4});
        CHECK(std::abs(x - c.expected_intersection) < 0.01);
    }
}

TEST_CASE("scan_intersection_bracket isolates the first of two crossings") {
    // f(x) = (2.05 - x) - 1/x has roots at exactly 0.8 and 1.25, so the full
    // window carries equal signs at its ends and plain bisection must refuse
    FitResult lin;
    lin.model = FitModel::Linear;
    lin.coeff = {-1.0, 2.05};
    FitResult pow;
    pow.model = FitModel::ShiftedPowerLaw;
    pow.coeff = {1.0, 1.0, 0.0};
    CHECK_THROWS_AS(intersect_fits(lin, pow, {0.5, 2.0}), FitError);
    const auto bracket = scan_intersection_bracket(lin, pow, {0.5, 2.0});
    REQUIRE(bracket.has_value());
    CHECK(intersect_fits(lin, pow, *bracket) == doctest::Approx(0.8).epsilon(1e-8));
    CHECK_FALSE(scan_intersection_bracket(lin, pow, {1.3, 2.0}).has_value());
}

TEST_CASE("fit_powerlaw settles on the exponent bound for log-like data") {
    // y = 1 - 0.3 ln x prefers ever smaller exponents; the admissible fit
    // converges on b = 0.5 instead of chasing the degenerate log limit
    const auto x = grid(1.0, 2.0, 15);
    std::vector<double> y;
    for (double xi : x) y.push_back(1.0 - 0.3 * std::log(xi));
    const FitResult f = fit_powerlaw(make_series(x, y), {0.9, 2.1});
    CHECK(f.coeff[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(f.coeff[0] > 0.0);
}

TEST_CASE("intersection uncertainty propagates the coefficient errors") {
    FitResult lin;
    lin.model = FitModel::Linear;
    lin.coeff = {1.0, 0.0};
    lin.coeff_err = {0.02, 0.01};
    FitResult pow;
    pow.model = FitModel::ShiftedPowerLaw;
    pow.coeff = {1.0, 1.0, 0.0};
    pow.coeff_err = {0.02, 0.5, 0.01}; // the b error drops out at x* = 1
    const double x_star = intersect_fits(lin, pow, {0.5, 2.0});
    const double sigma = intersect_uncertainty(lin, pow, x_star);
    // df/dx = 2 at x* = 1; var = (0.02^2 + 0.01^2) + (0.02^2 + 0 + 0.01^2)
    CHECK(sigma == doctest::Approx(std::sqrt(1e-3) / 2.0).epsilon(1e-6));
}

TEST_CASE("cumulant crossing of two synthetic lines") {
    const auto x = grid(0.2, 0.6, 21);
    std::vector<double> y1, y2;
    for (double xi : x) {
        y1.push_back(0.5 - 0.3 * (xi - 0.4));
        y2.push_back(0.5 - 0.9 * (xi - 0.4));
    }
    Series a = make_series(x, y1), b = make_series(x, y2);
    a.L = 8;
    b.L = 16;
    const CrossingResult r = cumulant_crossing({a, b});
    CHECK(r.t_c == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(r.spread == 0.0);

    // three sizes crossing at slightly different points
    std::vector<double> y3;
    for (double xi : x) y3.push_back(0.5 - 1.8 * (xi - 0.41));
    Series c = make_series(x, y3);
    c.L = 24;
    const CrossingResult r3 = cumulant_crossing({a, b, c});
    CHECK(r3.pairwise.size() == 3);
    CHECK(r3.t_c > 0.39);
    CHECK(r3.t_c < 0.42);
    CHECK(r3.spread < 0.03);

    // parallel curves never cross
    std::vector<double> y4;
    for (double xi : x) y4.push_back(0.5 - 0.3 * (xi - 0.4) + 0.05);
    Series par = make_series(x, y4);
    par.L = 32;
    CHECK_THROWS_AS(cumulant_crossing({a, par}), ConfigError);
    CHECK_THROWS_AS(cumulant_crossing({a}), ConfigError);
}

TEST_CASE("crossing scan ignores noise-collapsed stretches") {
    // noise makes the low-T difference wiggle around zero; starting the scan
    // from the point of maximal separation finds the genuine crossing
    const auto x = grid(0.2, 0.8, 31);
    std::vector<double> y1, y2;
    Rng rng(12);
    for (double xi : x) {
        const double sep = xi < 0.5 ? 1e-4 * (rng.uniform01() - 0.5) : -(xi - 0.5);
        y1.push_back(0.5);
        y2.push_back(0.5 + sep);
    }
    Series a = make_series(x, y1), b = make_series(x, y2);
    a.L = 8;
    b.L = 16;
    const CrossingResult r = cumulant_crossing({a, b});
    CHECK(r.t_c > 0.45);
    CHECK(r.t_c < 0.55);
}
