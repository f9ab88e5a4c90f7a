#include "ktclock/estimators.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace ktclock {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_and_err(const std::vector<double>& values, double& err) {
    const std::size_t n = values.size();
    if (n < 2) {
        err = kNaN;
        return n == 1 ? values[0] : kNaN;
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    err = std::sqrt(var / static_cast<double>(n));
    return mean;
}
} // namespace

int edge_variable(const LatticeGeometry& geom, const SpinConfig& config, int edge) {
    if (edge < 0 || edge >= geom.N) throw ConfigError("edge_variable: edge out of range");
    const int d = config.d;
    int diff = config.n[geom.edge_head[edge]] - config.n[geom.edge_tail[edge]];
    return (diff % d + d) % d;
}

void edge_variables(const LatticeGeometry& geom, const SpinConfig& config,
                    std::vector<std::uint8_t>& out) {
    const int d = config.d;
    out.resize(static_cast<std::size_t>(geom.N));
    for (int e = 0; e < geom.N; ++e) {
        int diff = config.n[geom.edge_head[e]] - config.n[geom.edge_tail[e]];
        out[static_cast<std::size_t>(e)] = static_cast<std::uint8_t>((diff % d + d) % d);
    }
}

HistogramSet make_histograms(const LatticeGeometry& geom, int d, bool with_pairs) {
    HistogramSet h;
    h.d = d;
    h.L = geom.L;
    h.N = geom.N;
    h.n_classes = pair_class_count(geom.L);
    h.single.assign(static_cast<std::size_t>(geom.N) * d, 0);
    if (with_pairs)
        h.pair.assign(static_cast<std::size_t>(h.n_classes) * d * d, 0);
    return h;
}

void accumulate_single(HistogramSet& h, const LatticeGeometry& geom, const SpinConfig& c) {
    const int d = h.d;
    for (int e = 0; e < geom.N; ++e) {
        int diff = c.n[geom.edge_head[e]] - c.n[geom.edge_tail[e]];
        ++h.single[static_cast<std::size_t>(e) * d + (diff % d + d) % d];
    }
    ++h.n_single_samples;
}

void accumulate_pair(HistogramSet& h, const LatticeGeometry& geom, const SpinConfig& c) {
    if (!h.has_pairs()) throw ConfigError("accumulate_pair: pair table not allocated");
    const int d = h.d;
    const int L = geom.L;

    // deinterleave the edge variables into one plane per orientation so the
    // class loop walks contiguous rows
    static thread_local std::vector<std::uint8_t> planes;
    planes.resize(static_cast<std::size_t>(2) * geom.V);
    std::uint8_t* plane[2] = {planes.data(), planes.data() + geom.V};
    for (int v = 0; v < geom.V; ++v) {
        const int dh = c.n[geom.edge_head[2 * v]] - c.n[geom.edge_tail[2 * v]];
        const int dv = c.n[geom.edge_head[2 * v + 1]] - c.n[geom.edge_tail[2 * v + 1]];
        plane[0][v] = static_cast<std::uint8_t>((dh % d + d) % d);
        plane[1][v] = static_cast<std::uint8_t>((dv % d + d) % d);
    }

    std::uint64_t* hist = h.pair.data();
    for (int oa = 0; oa < 2; ++oa)
        for (int ob = 0; ob < 2; ++ob) {
            const std::uint8_t* pa = plane[oa];
            const std::uint8_t* pb = plane[ob];
            for (int dy = 0; dy < L; ++dy)
                for (int dx = 0; dx < L; ++dx) {
                    if (oa == ob && dx == 0 && dy == 0) continue;
                    const int split = L - dx;
                    for (int ay = 0; ay < L; ++ay) {
                        const std::uint8_t* ra = pa + ay * L;
                        const std::uint8_t* rb = pb + ((ay + dy) % L) * L;
                        for (int x = 0; x < split; ++x) ++hist[ra[x] * d + rb[x + dx]];
                        for (int x = split; x < L; ++x) ++hist[ra[x] * d + rb[x + dx - L]];
                    }
                    hist += d * d;
                }
        }
    ++h.n_pair_samples;
}

void accumulate(HistogramSet& h, const LatticeGeometry& geom, const SpinConfig& c,
                std::int64_t snapshot_index, int pair_interval) {
    if (h.n_single_samples >= (1ull << 53))
        throw ConfigError("accumulate: single counters would overflow safe range");
    accumulate_single(h, geom, c);
    if (h.has_pairs() && snapshot_index % pair_interval == 0) {
        const std::uint64_t mult = static_cast<std::uint64_t>(geom.L) * geom.L;
        if ((h.n_pair_samples + 1) * mult >= (1ull << 53))
            throw ConfigError("accumulate: pair counters would overflow safe range");
        accumulate_pair(h, geom, c);
    }
}

void merge_into(HistogramSet& dst, const HistogramSet& src) {
    if (dst.d != src.d || dst.L != src.L || dst.single.size() != src.single.size() ||
        dst.pair.size() != src.pair.size())
        throw ConfigError("merge_into: histogram shapes differ");
    for (std::size_t i = 0; i < src.single.size(); ++i) dst.single[i] += src.single[i];
    for (std::size_t i = 0; i < src.pair.size(); ++i) dst.pair[i] += src.pair[i];
    dst.n_single_samples += src.n_single_samples;
    dst.n_pair_samples += src.n_pair_samples;
}

double ge_from_hist(const HistogramSet& h) {
    if (h.n_single_samples < 1)
        throw InsufficientDataError("ge_from_hist: no single-edge samples");
    const double inv_n = 1.0 / static_cast<double>(h.n_single_samples);
    long double purity_sum = 0.0L;
    for (int e = 0; e < h.N; ++e) {
        long double p2 = 0.0L;
        for (int m = 0; m < h.d; ++m) {
            const double p = static_cast<double>(h.single_count(e, m)) * inv_n;
            p2 += static_cast<long double>(p) * p;
        }
        purity_sum += p2;
    }
    const double d = static_cast<double>(h.d);
    return d / (d - 1.0) *
           (1.0 - static_cast<double>(purity_sum) / static_cast<double>(h.N));
}

double get_from_hist(const HistogramSet& h) {
    if (!h.has_pairs() || h.n_pair_samples < 1)
        throw InsufficientDataError("get_from_hist: no pair samples");
    const std::uint64_t mult = static_cast<std::uint64_t>(h.L) * h.L;
    const double inv_n = 1.0 / (static_cast<double>(mult) * static_cast<double>(h.n_pair_samples));
    long double weighted_purity = 0.0L;
    const int dd = h.d * h.d;
    for (int cl = 0; cl < h.n_classes; ++cl) {
        const std::uint64_t* row = &h.pair[static_cast<std::size_t>(cl) * dd];
        long double p2 = 0.0L;
        for (int k = 0; k < dd; ++k) {
            const double p = static_cast<double>(row[k]) * inv_n;
            p2 += static_cast<long double>(p) * p;
        }
        weighted_purity += static_cast<long double>(mult) * p2;
    }
    const double n_edges = static_cast<double>(h.N);
    const double d2 = static_cast<double>(h.d) * h.d;
    const double pair_avg = static_cast<double>(weighted_purity) / (n_edges * (n_edges - 1.0));
    return d2 / (d2 - 1.0) * (1.0 - pair_avg);
}

MagnetizationSample magnetization_sample(const SpinConfig& config) {
    const int d = config.d;
    std::vector<double> cos_t(static_cast<std::size_t>(d)), sin_t(static_cast<std::size_t>(d));
    for (int m = 0; m < d; ++m) {
        const double th = 2.0 * M_PI * m / d;
        cos_t[m] = std::cos(th);
        sin_t[m] = std::sin(th);
    }
    MagnetizationSample s;
    for (std::uint8_t n : config.n) {
        s.sigma_x += cos_t[n];
        s.sigma_y += sin_t[n];
    }
    s.phi = std::atan2(s.sigma_y, s.sigma_x);
    s.m_phi = std::cos(d * s.phi);
    return s;
}

double cumulant_um(double m2_mean, double m4_mean, std::uint64_t n_samples) {
    if (n_samples < 2)
        throw InsufficientDataError("cumulant_um: need at least 2 samples");
    if (m2_mean == 0.0)
        throw InsufficientDataError("cumulant_um: vanishing second moment");
    return 1.0 - m4_mean / (2.0 * m2_mean * m2_mean);
}

double specific_heat(double e_mean, double e2_mean, double T, int V) {
    return (e2_mean - e_mean * e_mean) / (static_cast<double>(V) * T * T);
}

MeasurementAccumulator::MeasurementAccumulator(const LatticeGeometry& geom,
                                               const SimulationParams& params)
    : geom_(geom), params_(params) {
    params_.validate();
    n_snapshots_ = params.measurement_sweeps / params.measurement_interval;
    if (params.bins > n_snapshots_)
        throw ConfigError("MeasurementAccumulator: more bins than snapshots");
    inv_vt2_ = 1.0 / (static_cast<double>(geom.V) * params.T * params.T);
    total_ = make_histograms(geom, params.d, params.measure_pairs);
    bin_hist_ = make_histograms(geom, params.d, params.measure_pairs);
    bins_.reserve(static_cast<std::size_t>(params.bins));
}

void MeasurementAccumulator::close_bin() {
    bin_.ge = bin_hist_.n_single_samples ? ge_from_hist(bin_hist_) : kNaN;
    if (bin_hist_.has_pairs() && bin_hist_.n_pair_samples >= 1) {
        bin_.get = get_from_hist(bin_hist_);
        bin_.q = bin_.get - bin_.ge;
    } else {
        bin_.get = kNaN;
        bin_.q = kNaN;
    }
    const double n = static_cast<double>(bin_.n_single);
    if (bin_.n_single >= 2 && bin_.m2_sum > 0.0)
        bin_.um = cumulant_um(bin_.m2_sum / n, bin_.m4_sum / n, bin_.n_single);
    else
        bin_.um = kNaN;
    if (bin_.n_single >= 1) {
        bin_.e_mean = bin_.e_sum / n;
        bin_.cv = (bin_.e2_sum / n - bin_.e_mean * bin_.e_mean) * inv_vt2_;
    } else {
        bin_.e_mean = kNaN;
        bin_.cv = kNaN;
    }
    merge_into(total_, bin_hist_);
    bins_.push_back(bin_);

    bin_ = BinStats{};
    std::fill(bin_hist_.single.begin(), bin_hist_.single.end(), 0);
    std::fill(bin_hist_.pair.begin(), bin_hist_.pair.end(), 0);
    bin_hist_.n_single_samples = 0;
    bin_hist_.n_pair_samples = 0;
}

void MeasurementAccumulator::add(std::int64_t snapshot_index, const SpinConfig& config,
                                 double energy) {
    const int target_bin = static_cast<int>(snapshot_index * params_.bins / n_snapshots_);
    if (target_bin != bin_index_) {
        close_bin();
        bin_index_ = target_bin;
    }
    accumulate(bin_hist_, geom_, config, snapshot_index, params_.pair_measurement_interval);
    const MagnetizationSample m = magnetization_sample(config);
    bin_.e_sum += energy;
    bin_.e2_sum += energy * energy;
    bin_.m2_sum += m.m_phi * m.m_phi;
    bin_.m4_sum += m.m_phi * m.m_phi * m.m_phi * m.m_phi;
    ++bin_.n_single;
    if (bin_hist_.has_pairs() && snapshot_index % params_.pair_measurement_interval == 0)
        ++bin_.n_pair;
}

PointStats MeasurementAccumulator::finalize() {
    if (bin_hist_.n_single_samples > 0 || bins_.empty()) close_bin();
    PointStats out;
    out.hist = std::move(total_);
    out.bins = std::move(bins_);
    out.run = run_;
    return out;
}

PointStats merge_points(PointStats a, const PointStats& b) {
    merge_into(a.hist, b.hist);
    a.bins.insert(a.bins.end(), b.bins.begin(), b.bins.end());
    a.run.proposals += b.run.proposals;
    a.run.accepted += b.run.accepted;
    a.run.cluster_updates += b.run.cluster_updates;
    a.run.cluster_sites += b.run.cluster_sites;
    a.run.snapshots += b.run.snapshots;
    return a;
}

ObservableRecord extract_record(const PointStats& stats, double T, std::uint64_t seed) {
    const HistogramSet& h = stats.hist;
    if (h.n_single_samples < 1)
        throw InsufficientDataError("extract_record: empty point");

    ObservableRecord r;
    r.d = h.d;
    r.L = h.L;
    r.T = T;
    r.beta = 1.0 / (2.0 * T);
    r.n_single_samples = h.n_single_samples;
    r.n_pair_samples = h.n_pair_samples;
    r.seed = seed;

    r.GE = ge_from_hist(h);
    if (h.has_pairs() && h.n_pair_samples >= 1) {
        r.GEt = get_from_hist(h);
        r.Q = q_value(r.GEt, r.GE);
    } else {
        r.GEt = kNaN;
        r.Q = kNaN;
    }

    // full-stream moments as the (deterministically ordered) sum of bin sums
    double e_sum = 0.0, e2_sum = 0.0, m2_sum = 0.0, m4_sum = 0.0;
    std::uint64_t n = 0;
    for (const BinStats& b : stats.bins) {
        e_sum += b.e_sum;
        e2_sum += b.e2_sum;
        m2_sum += b.m2_sum;
        m4_sum += b.m4_sum;
        n += b.n_single;
    }
    const double dn = static_cast<double>(n);
    r.E_mean = e_sum / dn;
    r.Cv = specific_heat(r.E_mean, e2_sum / dn, T, h.L * h.L);
    r.Um = cumulant_um(m2_sum / dn, m4_sum / dn, n);

    std::vector<double> ge_b, get_b, q_b, um_b, e_b, cv_b;
    for (const BinStats& b : stats.bins) {
        if (!std::isnan(b.ge)) ge_b.push_back(b.ge);
        if (!std::isnan(b.get)) {
            get_b.push_back(b.get);
            q_b.push_back(b.q);
        }
        if (!std::isnan(b.um)) um_b.push_back(b.um);
        if (!std::isnan(b.e_mean)) {
            e_b.push_back(b.e_mean);
            cv_b.push_back(b.cv);
        }
    }
    mean_and_err(ge_b, r.GE_err);
    mean_and_err(get_b, r.GEt_err);
    mean_and_err(q_b, r.Q_err);
    mean_and_err(um_b, r.Um_err);
    mean_and_err(e_b, r.E_err);
    mean_and_err(cv_b, r.Cv_err);
    return r;
}

} // namespace ktclock
