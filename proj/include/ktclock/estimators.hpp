#ifndef KTCLOCK_ESTIMATORS_HPP
#define KTCLOCK_ESTIMATORS_HPP

#include <cstdint>
#include <vector>

#include "ktclock/clock_mc.hpp"
#include "ktclock/lattice.hpp"

namespace ktclock {

// Edge variable m_e = (n_head - n_tail) mod d along the edge's direction.
// The two sign conventions give identical distributions (global spin
// reflection is a symmetry); head-minus-tail is fixed throughout.
int edge_variable(const LatticeGeometry& geom, const SpinConfig& config, int edge);

// All edge variables; out is resized to N, indexed like edges.
void edge_variables(const LatticeGeometry& geom, const SpinConfig& config,
                    std::vector<std::uint8_t>& out);

// Raw counts from which every purity derives. single is N x d; pair is
// (4L^2-2) x d x d indexed by dense pair-class index and (m_a, m_b).
struct HistogramSet {
    int d = 0;
    int L = 0;
    int N = 0;
    int n_classes = 0;
    std::vector<std::uint64_t> single;
    std::vector<std::uint64_t> pair; // empty when pairs are not measured
    std::uint64_t n_single_samples = 0;
    std::uint64_t n_pair_samples = 0;

    bool has_pairs() const { return !pair.empty(); }
    std::uint64_t single_count(int edge, int m) const {
        return single[static_cast<std::size_t>(edge) * d + m];
    }
    std::uint64_t pair_count(int class_index, int ma, int mb) const {
        return pair[(static_cast<std::size_t>(class_index) * d + ma) * d + mb];
    }
};

HistogramSet make_histograms(const LatticeGeometry& geom, int d, bool with_pairs);

void accumulate_single(HistogramSet& h, const LatticeGeometry& geom, const SpinConfig& c);
void accumulate_pair(HistogramSet& h, const LatticeGeometry& geom, const SpinConfig& c);

// Single counts always; pair counts when snapshot_index is a multiple of
// pair_interval. Throws on counter overflow risk.
void accumulate(HistogramSet& h, const LatticeGeometry& geom, const SpinConfig& c,
                std::int64_t snapshot_index, int pair_interval);

// Counter addition; shapes must match. Associative and order-independent.
void merge_into(HistogramSet& dst, const HistogramSet& src);

// GE = d/(d-1) * (1 - (1/N) sum_a sum_m P(a,m)^2). In [0, 1].
double ge_from_hist(const HistogramSet& h);

// Generalized GE over all unordered pairs, accumulated class-wise:
// GEt = d^2/(d^2-1) * (1 - (1/(N(N-1))) sum_class mult * sum_mm' P_class^2).
double get_from_hist(const HistogramSet& h);

inline double q_value(double ge_tilde, double ge) { return ge_tilde - ge; }

struct MagnetizationSample {
    double sigma_x = 0.0; // sum_i cos theta_i over vertices
    double sigma_y = 0.0;
    double phi = 0.0;   // atan2(sigma_y, sigma_x)
    double m_phi = 0.0; // cos(d * phi), the effective order parameter
};

MagnetizationSample magnetization_sample(const SpinConfig& config);

// U_m = 1 - <m^4> / (2 <m^2>^2); throws InsufficientDataError when the second
// moment vanishes or fewer than 2 samples entered the moments.
double cumulant_um(double m2_mean, double m4_mean, std::uint64_t n_samples);

// C_v = (<E^2> - <E>^2) / (V T^2)
double specific_heat(double e_mean, double e2_mean, double T, int V);

struct ObservableRecord {
    int d = 0;
    int L = 0;
    double T = 0.0;
    double beta = 0.0; // 1/(2T), recorded redundantly
    std::uint64_t n_single_samples = 0;
    std::uint64_t n_pair_samples = 0;
    double GE = 0.0, GE_err = 0.0;
    double GEt = 0.0, GEt_err = 0.0;
    double Q = 0.0, Q_err = 0.0;
    double Um = 0.0, Um_err = 0.0;
    double E_mean = 0.0, E_err = 0.0; // total (extensive) energy
    double Cv = 0.0, Cv_err = 0.0;
    std::uint64_t seed = 0;
};

// Per-bin raw sums plus the bin-local estimates used for error bars.
struct BinStats {
    std::uint64_t n_single = 0;
    std::uint64_t n_pair = 0;
    double e_sum = 0.0, e2_sum = 0.0;
    double m2_sum = 0.0, m4_sum = 0.0;
    double ge = 0.0, get = 0.0, q = 0.0; // NaN when the bin has no pair data
    double um = 0.0;
    double e_mean = 0.0, cv = 0.0;
};

// Everything one run (one replica) contributes. Replicas merge by histogram
// addition plus bin concatenation, so merging is associative and the merged
// record is independent of completion order.
struct PointStats {
    HistogramSet hist;
    std::vector<BinStats> bins;
    RunStats run;
};

class MeasurementAccumulator {
public:
    MeasurementAccumulator(const LatticeGeometry& geom, const SimulationParams& params);

    void add(std::int64_t snapshot_index, const SpinConfig& config, double energy);
    PointStats finalize();

private:
    void close_bin();

    const LatticeGeometry& geom_;
    SimulationParams params_;
    std::int64_t n_snapshots_ = 0;
    double inv_vt2_ = 0.0;
    HistogramSet total_;
    HistogramSet bin_hist_;
    BinStats bin_;
    int bin_index_ = 0;
    std::vector<BinStats> bins_;
    RunStats run_;
    std::vector<std::uint8_t> scratch_;
};

PointStats merge_points(PointStats a, const PointStats& b);

ObservableRecord extract_record(const PointStats& stats, double T, std::uint64_t seed);

} // namespace ktclock

#endif
