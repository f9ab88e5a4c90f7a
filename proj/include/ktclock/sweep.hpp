#ifndef KTCLOCK_SWEEP_HPP
#define KTCLOCK_SWEEP_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ktclock/analysis.hpp"
#include "ktclock/estimators.hpp"

namespace ktclock {

inline constexpr const char* kToolVersion = "0.1.0";

struct SweepConfig {
    std::vector<int> d_list;
    std::vector<int> L_list;
    std::vector<double> t_values;
    int replicas = 1;
    std::uint64_t master_seed = 1;
    int workers = 0; // 0 = env / hardware
    SimulationParams defaults;
    struct ParamsOverride {
        int d = 0;
        int L = 0;
        SimulationParams params;
    };
    std::vector<ParamsOverride> overrides;

    void validate() const;
    std::string canonical_json() const;
    std::uint64_t hash() const;
    SimulationParams params_for(int d, int L) const; // d/L/T/seed filled by caller

    static SweepConfig from_json_text(const std::string& text);
    static SweepConfig from_json_file(const std::filesystem::path& path);
};

struct CellKey {
    int d = 0;
    int L = 0;
    int t_index = 0;
    int replica = 0;
};

// Ordered work list: d, then L, then T index, then replica.
std::vector<CellKey> plan_cells(const SweepConfig& config);

// CLI flag > KTCLOCK_WORKERS env var > hardware concurrency.
int resolve_worker_count(int requested);

// One replica run: simulation feeding the measurement accumulator.
PointStats run_replica(const LatticeGeometry& geom, const SimulationParams& params);

// One-shot convenience used by the `simulate` subcommand.
ObservableRecord simulate_point(const SimulationParams& params);

std::string csv_header();
std::string record_to_csv(const ObservableRecord& r);
ObservableRecord record_from_csv(const std::string& line);

class ResultStore {
public:
    ResultStore() = default;
    explicit ResultStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

    static ResultStore load(const std::filesystem::path& dir);

    const std::filesystem::path& dir() const { return dir_; }
    const std::vector<ObservableRecord>& records() const { return records_; }
    std::vector<ObservableRecord> records_for(int d, int L) const;
    std::vector<int> d_values() const;
    std::vector<int> l_values(int d) const;

    // Observable in {GE, GEt, Q, Um, E, Cv}; throws MissingSeriesError.
    Series series(int d, int L, const std::string& observable) const;

    void set_records(std::vector<ObservableRecord> records);

private:
    std::filesystem::path dir_;
    std::vector<ObservableRecord> records_;
};

struct SweepOptions {
    int workers = 0;
    bool resume = false;
    std::optional<std::uint64_t> seed_override;
    std::int64_t max_cells = -1; // testing hook: stop after this many new cells
};

// Runs every missing (d, L, T, replica) cell, persists one result blob per
// cell, then assembles per-(d, L) CSVs and the manifest. Output is
// deterministic for a fixed master seed regardless of worker count or
// completion order. Throws after writing a partial-failure manifest if any
// cell fails.
ResultStore run_sweep(const SweepConfig& config, const std::filesystem::path& out_dir,
                      const SweepOptions& options = {});

struct AnalyzeOptions {
    std::string observable;            // empty = kind-specific default
    std::optional<Window> linear_window;
    std::optional<Window> power_window;
    std::optional<Window> crossing_window;
    std::optional<int> only_d;
    std::optional<int> only_L;
    double smooth_width = 1.0;
};

// kind in {derivatives, q-peak, fits, crossings}. Writes report_<kind>.json
// plus two-column plot data files under out_dir and returns the report text.
std::string analyze_store(const ResultStore& store, const std::string& kind,
                          const std::filesystem::path& out_dir,
                          const AnalyzeOptions& options = {});

} // namespace ktclock

#endif
