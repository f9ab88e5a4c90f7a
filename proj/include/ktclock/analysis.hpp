#ifndef KTCLOCK_ANALYSIS_HPP
#define KTCLOCK_ANALYSIS_HPP

#include <optional>
#include <string>
#include <vector>

#include "ktclock/errors.hpp"

namespace ktclock {

// One observable as a function of the control parameter (2*beta)^-1 = T.
struct Series {
    std::vector<double> x;     // strictly increasing
    std::vector<double> y;
    std::vector<double> y_err; // empty or same length as y
    int d = 0;
    int L = 0;
    std::string observable;

    void validate() const; // throws ConfigError
};

// Central finite differences after a Gaussian-weighted local-linear smoothing
// pass (width = smooth_width grid spacings; 0 disables smoothing). Endpoints
// are one-sided. Requires >= 5 points.
Series derivative(const Series& s, double smooth_width = 1.0);

struct PeakResult {
    double x_peak = 0.0;
    double uncertainty = 0.0; // half grid spacing + quadratic-vertex stderr, in quadrature
};

// Quadratic fit through the 5 points around the discrete maximum, which must
// be interior. Throws FitError when the maximum sits on either endpoint.
PeakResult find_peak(const Series& s);

enum class FitModel { Linear, ShiftedPowerLaw };

struct FitResult {
    FitModel model = FitModel::Linear;
    std::vector<double> coeff;     // linear: {a, b} in a*x+b; power: {a, b, c} in a*x^-b+c
    std::vector<double> coeff_err;
    double rss = 0.0;              // unweighted residual sum of squares
    double window_lo = 0.0, window_hi = 0.0;
    int n_points = 0;

    double operator()(double x) const;
};

struct Window {
    double lo = 0.0;
    double hi = 0.0;
};

// Weighted least squares (weights 1/err^2 when errors are present) on the
// points inside the window. Linear needs >= 3 points.
FitResult fit_linear(const Series& s, Window window);

// y = a*x^-b + c by coarse grid search over b in [0.5, 6] with (a, c) solved
// linearly, then damped Gauss-Newton refinement. Needs >= 4 points, x > 0.
// Throws FitError on non-convergence or an unidentifiable exponent.
FitResult fit_powerlaw(const Series& s, Window window);

// Root of linear(x) - power(x) by bisection to 1e-10; the bracket endpoints
// must straddle the root.
double intersect_fits(const FitResult& linear, const FitResult& power, Window bracket);

// First sign change of linear(x) - power(x) on an n-point scan of the window;
// feeds intersect_fits when the curves cross more than once. Empty when the
// difference never changes sign.
std::optional<Window> scan_intersection_bracket(const FitResult& linear,
                                                const FitResult& power, Window window,
                                                int n = 256);

// First-order propagation of the (diagonal) coefficient uncertainties of both
// fits through the root condition linear(x*) = power(x*).
double intersect_uncertainty(const FitResult& linear, const FitResult& power,
                             double x_star);

struct CrossingResult {
    double t_c = 0.0;
    double spread = 0.0; // max pairwise difference between crossings
    std::vector<double> pairwise;
};

// Crossing points of cumulant curves for different system sizes, located by
// piecewise-linear interpolation on the shared grid. The scan starts where
// the two curves are most separated and moves toward higher T first, so the
// noise-dominated stretches where the curves collapse are never reached.
CrossingResult cumulant_crossing(const std::vector<Series>& series,
                                 std::optional<Window> window = {});

} // namespace ktclock

#endif
