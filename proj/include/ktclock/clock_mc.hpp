#ifndef KTCLOCK_CLOCK_MC_HPP
#define KTCLOCK_CLOCK_MC_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "ktclock/lattice.hpp"
#include "ktclock/rng.hpp"

namespace ktclock {

// d-state spins on the vertices; spin i has angle theta_i = 2*pi*n_i/d.
struct SpinConfig {
    int d = 2;
    std::vector<std::uint8_t> n; // one value in [0, d) per vertex
};

SpinConfig make_ordered_config(int d, int V);

enum class Sampler { Metropolis, MetropolisCluster };

struct SimulationParams {
    int d = 2;
    int L = 8;
    double T = 1.0; // temperature; beta of the quantum state = 1/(2T)
    std::int64_t thermalization_sweeps = 20000;
    std::int64_t measurement_sweeps = 200000;
    int measurement_interval = 10;      // sweeps between snapshots
    int pair_measurement_interval = 10; // snapshots between pair accumulations
    Sampler sampler = Sampler::MetropolisCluster;
    std::uint64_t seed = 0;
    int bins = 32;             // equal bins for the error analysis
    bool measure_pairs = true; // pair histograms are the expensive channel
    std::uint64_t memory_budget_bytes = 4ull << 30;

    void validate() const; // throws ConfigError
};

// cos(theta_a - theta_b) lookup by (n_a - n_b) mod d, built so that entries
// m and d-m are bitwise equal (the table is exactly even).
std::vector<double> make_cos_table(int d);

// Total energy -sum_edges cos(theta_tail - theta_head); throws ConfigError on
// a config/geometry size mismatch.
double energy(const LatticeGeometry& geom, const SpinConfig& config);

// Energy change of setting site to new_value, from the four incident bonds.
double local_delta_e(const LatticeGeometry& geom, const SpinConfig& config,
                     const std::vector<double>& cos_table, int site, int new_value);

// min(1, exp(-dE/T)); with the uniform proposal this satisfies detailed
// balance with respect to exp(-E/T).
double metropolis_acceptance(double delta_e, double T);

// One sequential pass over all V sites with uniform proposals among the other
// d-1 states and Metropolis acceptance min(1, exp(-dE/T)). Updates the running
// energy. Returns the number of accepted moves.
std::int64_t metropolis_sweep(const LatticeGeometry& geom, SpinConfig& config,
                              double T, Rng& rng, double& energy_acc);

// One reflection-embedded cluster flip: draw a reflection n -> (c - n) mod d,
// grow a cluster from a random seed site with bond probability
// 1 - exp(min(0, -dE_bond/T)), flip it. Preserves the Boltzmann distribution.
// Updates the running energy. Returns the cluster size.
int cluster_update(const LatticeGeometry& geom, SpinConfig& config, double T,
                   Rng& rng, double& energy_acc);

struct RunStats {
    std::int64_t proposals = 0;
    std::int64_t accepted = 0;
    std::int64_t cluster_updates = 0;
    std::int64_t cluster_sites = 0;
    std::int64_t snapshots = 0;
    double final_energy = 0.0;
};

// snapshot_index counts from 0; energy is the (incrementally tracked) total
// energy of the emitted configuration.
using SnapshotFn =
    std::function<void(std::int64_t snapshot_index, const SpinConfig&, double energy)>;

// Runs thermalization, then emits measurement_sweeps / measurement_interval
// snapshots. Fully deterministic given params (including seed).
RunStats run_simulation(const LatticeGeometry& geom, const SimulationParams& params,
                        const SnapshotFn& on_snapshot);

} // namespace ktclock

#endif
