#include "ktclock/clock_mc.hpp"

#include <cmath>
#include <string>

namespace ktclock {

SpinConfig make_ordered_config(int d, int V) {
    SpinConfig c;
    c.d = d;
    c.n.assign(static_cast<std::size_t>(V), 0);
    return c;
}

void SimulationParams::validate() const {
    if (d < 2) throw ConfigError("params: d must be >= 2");
    if (d > 255) throw ConfigError("params: d too large for 8-bit spin storage");
    if (L < 2) throw ConfigError("params: L must be >= 2");
    if (!(T > 0.0)) throw ConfigError("params: T must be positive");
    if (thermalization_sweeps < 0) throw ConfigError("params: negative thermalization");
    if (measurement_sweeps < 1) throw ConfigError("params: measurement_sweeps must be >= 1");
    if (measurement_interval < 1) throw ConfigError("params: measurement_interval must be >= 1");
    if (pair_measurement_interval < 1)
        throw ConfigError("params: pair_measurement_interval must be >= 1");
    if (bins < 2) throw ConfigError("params: bins must be >= 2");
}

std::vector<double> make_cos_table(int d) {
    std::vector<double> t(static_cast<std::size_t>(d));
    for (int m = 0; m <= d / 2; ++m) {
        double c = std::cos(2.0 * M_PI * static_cast<double>(m) / static_cast<double>(d));
        t[static_cast<std::size_t>(m)] = c;
        t[static_cast<std::size_t>((d - m) % d)] = c; // exactly even table
    }
    return t;
}

double energy(const LatticeGeometry& geom, const SpinConfig& config) {
    if (static_cast<int>(config.n.size()) != geom.V)
        throw ConfigError("energy: config size does not match lattice");
    const auto cos_t = make_cos_table(config.d);
    const int d = config.d;
    double e = 0.0;
    for (int ed = 0; ed < geom.N; ++ed) {
        int diff = config.n[geom.edge_tail[ed]] - config.n[geom.edge_head[ed]];
        e -= cos_t[static_cast<std::size_t>((diff % d + d) % d)];
    }
    return e;
}

double local_delta_e(const LatticeGeometry& geom, const SpinConfig& config,
                     const std::vector<double>& cos_table, int site, int new_value) {
    const int d = config.d;
    const int old_value = config.n[site];
    const std::int32_t* nbr = geom.neighbors_of(site);
    double de = 0.0;
    for (int k = 0; k < 4; ++k) {
        const int m = config.n[nbr[k]];
        de -= cos_table[static_cast<std::size_t>(((new_value - m) % d + d) % d)] -
              cos_table[static_cast<std::size_t>(((old_value - m) % d + d) % d)];
    }
    return de;
}

double metropolis_acceptance(double delta_e, double T) {
    return delta_e <= 0.0 ? 1.0 : std::exp(-delta_e / T);
}

std::int64_t metropolis_sweep(const LatticeGeometry& geom, SpinConfig& config,
                              double T, Rng& rng, double& energy_acc) {
    const int d = config.d;
    const auto cos_t = make_cos_table(d);
    const double inv_t = 1.0 / T;
    std::int64_t accepted = 0;

    for (int site = 0; site < geom.V; ++site) {
        const int old_value = config.n[site];
        int proposal = old_value + 1 + static_cast<int>(rng.uniform_below(
                                           static_cast<std::uint32_t>(d - 1)));
        if (proposal >= d) proposal -= d;

        const std::int32_t* nbr = geom.neighbors_of(site);
        double de = 0.0;
        for (int k = 0; k < 4; ++k) {
            const int m = config.n[nbr[k]];
            de -= cos_t[static_cast<std::size_t>(((proposal - m) % d + d) % d)] -
                  cos_t[static_cast<std::size_t>(((old_value - m) % d + d) % d)];
        }
        if (de <= 0.0 || rng.uniform01() < std::exp(-de * inv_t)) {
            config.n[site] = static_cast<std::uint8_t>(proposal);
            energy_acc += de;
            ++accepted;
        }
    }
    return accepted;
}

int cluster_update(const LatticeGeometry& geom, SpinConfig& config, double T,
                   Rng& rng, double& energy_acc) {
    const int d = config.d;
    const auto cos_t = make_cos_table(d);
    const double inv_t = 1.0 / T;

    // reflection n -> (c - n) mod d; an involution and a symmetry of the bond
    // energy, so the embedded bond variables are Ising-like
    const int c = static_cast<int>(rng.uniform_below(static_cast<std::uint32_t>(d)));
    auto reflect = [c, d](int n) { return ((c - n) % d + d) % d; };
    auto bond = [&](int na, int nb) {
        return -cos_t[static_cast<std::size_t>(((na - nb) % d + d) % d)];
    };

    std::vector<std::uint8_t> in_cluster(static_cast<std::size_t>(geom.V), 0);
    std::vector<std::int32_t> stack;
    std::vector<std::int32_t> members;
    stack.reserve(64);
    members.reserve(64);

    const int seed_site = static_cast<int>(rng.uniform_below(static_cast<std::uint32_t>(geom.V)));
    in_cluster[seed_site] = 1;
    config.n[seed_site] = static_cast<std::uint8_t>(reflect(config.n[seed_site]));
    stack.push_back(seed_site);
    members.push_back(seed_site);

    while (!stack.empty()) {
        const int site = stack.back();
        stack.pop_back();
        const int n_new = config.n[site];
        const int n_old = reflect(n_new);
        const std::int32_t* nbr = geom.neighbors_of(site);
        for (int k = 0; k < 4; ++k) {
            const int j = nbr[k];
            if (in_cluster[j]) continue;
            // cost of leaving the neighbor behind, relative to taking it along
            const double de_bond = bond(n_new, config.n[j]) - bond(n_old, config.n[j]);
            if (de_bond <= 0.0) continue;
            if (rng.uniform01() < 1.0 - std::exp(-de_bond * inv_t)) {
                in_cluster[j] = 1;
                config.n[j] = static_cast<std::uint8_t>(reflect(config.n[j]));
                stack.push_back(j);
                members.push_back(j);
            }
        }
    }

    // energy changes only across the cluster boundary; interior bonds are
    // preserved by the reflection symmetry
    double de = 0.0;
    for (int site : members) {
        const int n_new = config.n[site];
        const int n_old = reflect(n_new);
        const std::int32_t* nbr = geom.neighbors_of(site);
        for (int k = 0; k < 4; ++k) {
            const int j = nbr[k];
            if (in_cluster[j]) continue;
            de += bond(n_new, config.n[j]) - bond(n_old, config.n[j]);
        }
    }
    energy_acc += de;
    return static_cast<int>(members.size());
}

RunStats run_simulation(const LatticeGeometry& geom, const SimulationParams& params,
                        const SnapshotFn& on_snapshot) {
    params.validate();
    if (geom.L != params.L) throw ConfigError("run_simulation: geometry does not match params");

    // the measurement tables this run will feed: N*d single counters plus the
    // pair-class table, twice (running bin + totals)
    const std::uint64_t d2 = static_cast<std::uint64_t>(params.d) * params.d;
    std::uint64_t table_bytes =
        2ull * 8ull * (static_cast<std::uint64_t>(geom.N) * params.d +
                       (params.measure_pairs
                            ? static_cast<std::uint64_t>(pair_class_count(geom.L)) * d2
                            : 0ull));
    if (table_bytes > params.memory_budget_bytes)
        throw SizeGuardError("run_simulation: histogram tables (" +
                             std::to_string(table_bytes) +
                             " bytes) exceed the memory budget");

    Rng rng(params.seed);
    SpinConfig config = make_ordered_config(params.d, geom.V);
    double e = energy(geom, config);

    RunStats stats;
    const bool with_cluster = params.sampler == Sampler::MetropolisCluster;
    const std::int64_t refresh_interval = 1000; // kill roundoff drift in e

    auto do_sweep = [&](std::int64_t sweep_index) {
        stats.accepted += metropolis_sweep(geom, config, params.T, rng, e);
        stats.proposals += geom.V;
        if (with_cluster) {
            stats.cluster_sites += cluster_update(geom, config, params.T, rng, e);
            ++stats.cluster_updates;
        }
        if ((sweep_index + 1) % refresh_interval == 0) e = energy(geom, config);
    };

    for (std::int64_t s = 0; s < params.thermalization_sweeps; ++s) do_sweep(s);

    const std::int64_t n_snapshots = params.measurement_sweeps / params.measurement_interval;
    std::int64_t emitted = 0;
    for (std::int64_t s = 0; s < params.measurement_sweeps; ++s) {
        do_sweep(params.thermalization_sweeps + s);
        if ((s + 1) % params.measurement_interval == 0 && emitted < n_snapshots) {
            if (on_snapshot) on_snapshot(emitted, config, e);
            ++emitted;
        }
    }
    stats.snapshots = emitted;
    stats.final_energy = e;
    return stats;
}

} // namespace ktclock
