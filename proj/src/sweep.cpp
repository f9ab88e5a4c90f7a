#include "ktclock/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "ktclock/quantum_oracle.hpp"
#include "ktclock/rng.hpp"

namespace ktclock {

namespace {

using nlohmann::json;

std::string fmt_double(double v) {
    char buf[40];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
    return std::strtod(s.c_str(), nullptr);
}

std::string now_string() {
    std::time_t t = std::time(nullptr);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void apply_params_patch(SimulationParams& p, const json& j) {
    if (j.contains("thermalization_sweeps"))
        p.thermalization_sweeps = j["thermalization_sweeps"].get<std::int64_t>();
    if (j.contains("measurement_sweeps"))
        p.measurement_sweeps = j["measurement_sweeps"].get<std::int64_t>();
    if (j.contains("measurement_interval"))
        p.measurement_interval = j["measurement_interval"].get<int>();
    if (j.contains("pair_measurement_interval"))
        p.pair_measurement_interval = j["pair_measurement_interval"].get<int>();
    if (j.contains("bins")) p.bins = j["bins"].get<int>();
    if (j.contains("measure_pairs")) p.measure_pairs = j["measure_pairs"].get<bool>();
    if (j.contains("memory_budget_bytes"))
        p.memory_budget_bytes = j["memory_budget_bytes"].get<std::uint64_t>();
    if (j.contains("sampler")) {
        const std::string s = j["sampler"].get<std::string>();
        if (s == "metropolis")
            p.sampler = Sampler::Metropolis;
        else if (s == "metropolis+cluster")
            p.sampler = Sampler::MetropolisCluster;
        else
            throw ConfigError("config: unknown sampler '" + s + "'");
    }
}

json params_to_json(const SimulationParams& p) {
    json j;
    j["thermalization_sweeps"] = p.thermalization_sweeps;
    j["measurement_sweeps"] = p.measurement_sweeps;
    j["measurement_interval"] = p.measurement_interval;
    j["pair_measurement_interval"] = p.pair_measurement_interval;
    j["sampler"] = p.sampler == Sampler::Metropolis ? "metropolis" : "metropolis+cluster";
    j["bins"] = p.bins;
    j["measure_pairs"] = p.measure_pairs;
    j["memory_budget_bytes"] = p.memory_budget_bytes;
    return j;
}

// ---- cell result blobs ------------------------------------------------

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

constexpr std::uint32_t kBlobMagic = 0x4B43544Bu; // "KTCK"

void write_cell_blob(const std::filesystem::path& path, const CellKey& key,
                     std::uint64_t seed, double T, const PointStats& ps) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ConfigError("cannot write " + tmp.string());
        write_pod(os, kBlobMagic);
        write_pod(os, std::uint32_t{1});
        write_pod(os, std::int32_t(key.d));
        write_pod(os, std::int32_t(key.L));
        write_pod(os, std::int32_t(key.t_index));
        write_pod(os, std::int32_t(key.replica));
        write_pod(os, seed);
        write_pod(os, T);

        const HistogramSet& h = ps.hist;
        write_pod(os, std::int32_t(h.d));
        write_pod(os, std::int32_t(h.L));
        write_pod(os, std::int32_t(h.N));
        write_pod(os, std::int32_t(h.n_classes));
        write_pod(os, h.n_single_samples);
        write_pod(os, h.n_pair_samples);
        write_pod(os, std::uint64_t(h.single.size()));
        os.write(reinterpret_cast<const char*>(h.single.data()),
                 static_cast<std::streamsize>(h.single.size() * sizeof(std::uint64_t)));
        write_pod(os, std::uint64_t(h.pair.size()));
        os.write(reinterpret_cast<const char*>(h.pair.data()),
                 static_cast<std::streamsize>(h.pair.size() * sizeof(std::uint64_t)));

        write_pod(os, std::uint64_t(ps.bins.size()));
        for (const BinStats& b : ps.bins) {
            write_pod(os, b.n_single);
            write_pod(os, b.n_pair);
            write_pod(os, b.e_sum);
            write_pod(os, b.e2_sum);
            write_pod(os, b.m2_sum);
            write_pod(os, b.m4_sum);
            write_pod(os, b.ge);
            write_pod(os, b.get);
            write_pod(os, b.q);
            write_pod(os, b.um);
            write_pod(os, b.e_mean);
            write_pod(os, b.cv);
        }
        write_pod(os, ps.run.proposals);
        write_pod(os, ps.run.accepted);
        write_pod(os, ps.run.cluster_updates);
        write_pod(os, ps.run.cluster_sites);
        write_pod(os, ps.run.snapshots);
        write_pod(os, ps.run.final_energy);
        if (!os) throw ConfigError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

PointStats read_cell_blob(const std::filesystem::path& path, CellKey& key,
                          std::uint64_t& seed, double& T) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot read " + path.string());
    std::uint32_t magic = 0, version = 0;
    read_pod(is, magic);
    read_pod(is, version);
    if (magic != kBlobMagic || version != 1)
        throw ConfigError("bad cell blob " + path.string());
    std::int32_t d, L, t_index, replica;
    read_pod(is, d);
    read_pod(is, L);
    read_pod(is, t_index);
    read_pod(is, replica);
    key = {d, L, t_index, replica};
    read_pod(is, seed);
    read_pod(is, T);

    PointStats ps;
    HistogramSet& h = ps.hist;
    std::int32_t hd, hl, hn, hc;
    read_pod(is, hd);
    read_pod(is, hl);
    read_pod(is, hn);
    read_pod(is, hc);
    h.d = hd;
    h.L = hl;
    h.N = hn;
    h.n_classes = hc;
    read_pod(is, h.n_single_samples);
    read_pod(is, h.n_pair_samples);
    std::uint64_t n = 0;
    read_pod(is, n);
    h.single.resize(n);
    is.read(reinterpret_cast<char*>(h.single.data()),
            static_cast<std::streamsize>(n * sizeof(std::uint64_t)));
    read_pod(is, n);
    h.pair.resize(n);
    is.read(reinterpret_cast<char*>(h.pair.data()),
            static_cast<std::streamsize>(n * sizeof(std::uint64_t)));

    read_pod(is, n);
    ps.bins.resize(n);
    for (BinStats& b : ps.bins) {
        read_pod(is, b.n_single);
        read_pod(is, b.n_pair);
        read_pod(is, b.e_sum);
        read_pod(is, b.e2_sum);
        read_pod(is, b.m2_sum);
        read_pod(is, b.m4_sum);
        read_pod(is, b.ge);
        read_pod(is, b.get);
        read_pod(is, b.q);
        read_pod(is, b.um);
        read_pod(is, b.e_mean);
        read_pod(is, b.cv);
    }
    read_pod(is, ps.run.proposals);
    read_pod(is, ps.run.accepted);
    read_pod(is, ps.run.cluster_updates);
    read_pod(is, ps.run.cluster_sites);
    read_pod(is, ps.run.snapshots);
    read_pod(is, ps.run.final_energy);
    if (!is) throw ConfigError("short read from " + path.string());
    return ps;
}

std::string cell_file_name(const CellKey& k) {
    return "cell_d" + std::to_string(k.d) + "_L" + std::to_string(k.L) + "_t" +
           std::to_string(k.t_index) + "_r" + std::to_string(k.replica) + ".bin";
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

void SweepConfig::validate() const {
    if (d_list.empty() || L_list.empty() || t_values.empty())
        throw ConfigError("config: d, L and T lists must be non-empty");
    for (int d : d_list)
        if (d < 2) throw ConfigError("config: d must be >= 2");
    for (int l : L_list)
        if (l < 2) throw ConfigError("config: L must be >= 2");
    for (std::size_t i = 0; i < t_values.size(); ++i) {
        if (!(t_values[i] > 0.0)) throw ConfigError("config: T values must be positive");
        if (i > 0 && !(t_values[i] > t_values[i - 1]))
            throw ConfigError("config: T values must be strictly increasing");
    }
    if (replicas < 1) throw ConfigError("config: replicas must be >= 1");
}

std::string SweepConfig::canonical_json() const {
    json j;
    j["d"] = d_list;
    j["L"] = L_list;
    j["T"] = t_values;
    j["replicas"] = replicas;
    j["seed"] = master_seed;
    j["params"] = params_to_json(defaults);
    json ov = json::array();
    for (const auto& o : overrides)
        ov.push_back({{"d", o.d}, {"L", o.L}, {"params", params_to_json(o.params)}});
    j["overrides"] = ov;
    return j.dump();
}

std::uint64_t SweepConfig::hash() const { return fnv1a(canonical_json()); }

SimulationParams SweepConfig::params_for(int d, int L) const {
    SimulationParams p = defaults;
    for (const auto& o : overrides)
        if (o.d == d && o.L == L) p = o.params;
    p.d = d;
    p.L = L;
    return p;
}

SweepConfig SweepConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    SweepConfig c;
    if (!j.contains("d") || !j.contains("L") || !j.contains("T"))
        throw ConfigError("config: required fields d, L, T");
    c.d_list = j["d"].get<std::vector<int>>();
    c.L_list = j["L"].get<std::vector<int>>();
    if (j["T"].is_array()) {
        c.t_values = j["T"].get<std::vector<double>>();
        std::sort(c.t_values.begin(), c.t_values.end());
    } else {
        const double lo = j["T"].at("min").get<double>();
        const double hi = j["T"].at("max").get<double>();
        const double step = j["T"].at("step").get<double>();
        if (!(step > 0.0)) throw ConfigError("config: T.step must be positive");
        for (int k = 0;; ++k) {
            const double t = lo + k * step;
            if (t > hi + step * 1e-9) break;
            c.t_values.push_back(t);
        }
    }
    if (j.contains("replicas")) c.replicas = j["replicas"].get<int>();
    if (j.contains("seed")) c.master_seed = j["seed"].get<std::uint64_t>();
    if (j.contains("workers")) c.workers = j["workers"].get<int>();
    if (j.contains("params")) apply_params_patch(c.defaults, j["params"]);
    if (j.contains("overrides")) {
        for (const auto& o : j["overrides"]) {
            ParamsOverride ov;
            ov.d = o.at("d").get<int>();
            ov.L = o.at("L").get<int>();
            ov.params = c.defaults;
            if (o.contains("params")) apply_params_patch(ov.params, o["params"]);
            c.overrides.push_back(ov);
        }
    }
    c.validate();
    return c;
}

SweepConfig SweepConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return from_json_text(ss.str());
}

std::vector<CellKey> plan_cells(const SweepConfig& config) {
    config.validate();
    std::vector<CellKey> cells;
    for (int d : config.d_list)
        for (int L : config.L_list)
            for (int t = 0; t < static_cast<int>(config.t_values.size()); ++t)
                for (int r = 0; r < config.replicas; ++r)
                    cells.push_back({d, L, t, r});
    return cells;
}

int resolve_worker_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("KTCLOCK_WORKERS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

PointStats run_replica(const LatticeGeometry& geom, const SimulationParams& params) {
    MeasurementAccumulator acc(geom, params);
    RunStats rs = run_simulation(
        geom, params,
        [&acc](std::int64_t i, const SpinConfig& cfg, double e) { acc.add(i, cfg, e); });
    PointStats ps = acc.finalize();
    ps.run = rs;
    return ps;
}

ObservableRecord simulate_point(const SimulationParams& params) {
    const LatticeGeometry geom = build_lattice(params.L);
    const PointStats ps = run_replica(geom, params);
    return extract_record(ps, params.T, params.seed);
}

std::string csv_header() {
    return "d,L,T,beta,n_single_samples,n_pair_samples,GE,GE_err,GEt,GEt_err,"
           "Q,Q_err,Um,Um_err,E_mean,E_err,Cv,Cv_err,seed";
}

std::string record_to_csv(const ObservableRecord& r) {
    std::string s;
    s += std::to_string(r.d) + ',';
    s += std::to_string(r.L) + ',';
    s += fmt_double(r.T) + ',';
    s += fmt_double(r.beta) + ',';
    s += std::to_string(r.n_single_samples) + ',';
    s += std::to_string(r.n_pair_samples) + ',';
    s += fmt_double(r.GE) + ',';
    s += fmt_double(r.GE_err) + ',';
    s += fmt_double(r.GEt) + ',';
    s += fmt_double(r.GEt_err) + ',';
    s += fmt_double(r.Q) + ',';
    s += fmt_double(r.Q_err) + ',';
    s += fmt_double(r.Um) + ',';
    s += fmt_double(r.Um_err) + ',';
    s += fmt_double(r.E_mean) + ',';
    s += fmt_double(r.E_err) + ',';
    s += fmt_double(r.Cv) + ',';
    s += fmt_double(r.Cv_err) + ',';
    s += std::to_string(r.seed);
    return s;
}

ObservableRecord record_from_csv(const std::string& line) {
    std::vector<std::string> f;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            f.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    f.push_back(cur);
    if (f.size() != 19) throw ConfigError("csv: expected 19 columns, got " +
                                          std::to_string(f.size()));
    ObservableRecord r;
    r.d = std::atoi(f[0].c_str());
    r.L = std::atoi(f[1].c_str());
    r.T = parse_double(f[2]);
    r.beta = parse_double(f[3]);
    r.n_single_samples = std::strtoull(f[4].c_str(), nullptr, 10);
    r.n_pair_samples = std::strtoull(f[5].c_str(), nullptr, 10);
    r.GE = parse_double(f[6]);
    r.GE_err = parse_double(f[7]);
    r.GEt = parse_double(f[8]);
    r.GEt_err = parse_double(f[9]);
    r.Q = parse_double(f[10]);
    r.Q_err = parse_double(f[11]);
    r.Um = parse_double(f[12]);
    r.Um_err = parse_double(f[13]);
    r.E_mean = parse_double(f[14]);
    r.E_err = parse_double(f[15]);
    r.Cv = parse_double(f[16]);
    r.Cv_err = parse_double(f[17]);
    r.seed = std::strtoull(f[18].c_str(), nullptr, 10);
    return r;
}

ResultStore ResultStore::load(const std::filesystem::path& dir) {
    ResultStore store(dir);
    std::vector<ObservableRecord> records;
    if (std::filesystem::exists(dir)) {
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("results_", 0) == 0 && e.path().extension() == ".csv")
                files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            std::ifstream is(f);
            std::string line;
            bool first = true;
            while (std::getline(is, line)) {
                if (first) {
                    first = false;
                    continue;
                }
                if (!line.empty()) records.push_back(record_from_csv(line));
            }
        }
    }
    store.set_records(std::move(records));
    return store;
}

void ResultStore::set_records(std::vector<ObservableRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const ObservableRecord& a, const ObservableRecord& b) {
                  if (a.d != b.d) return a.d < b.d;
                  if (a.L != b.L) return a.L < b.L;
                  return a.T < b.T;
              });
    records_ = std::move(records);
}

std::vector<ObservableRecord> ResultStore::records_for(int d, int L) const {
    std::vector<ObservableRecord> out;
    for (const auto& r : records_)
        if (r.d == d && r.L == L) out.push_back(r);
    return out;
}

std::vector<int> ResultStore::d_values() const {
    std::set<int> s;
    for (const auto& r : records_) s.insert(r.d);
    return {s.begin(), s.end()};
}

std::vector<int> ResultStore::l_values(int d) const {
    std::set<int> s;
    for (const auto& r : records_)
        if (r.d == d) s.insert(r.L);
    return {s.begin(), s.end()};
}

Series ResultStore::series(int d, int L, const std::string& observable) const {
    Series s;
    s.d = d;
    s.L = L;
    s.observable = observable;
    for (const auto& r : records_for(d, L)) {
        double y, e;
        if (observable == "GE") {
            y = r.GE;
            e = r.GE_err;
        } else if (observable == "GEt") {
            y = r.GEt;
            e = r.GEt_err;
        } else if (observable == "Q") {
            y = r.Q;
            e = r.Q_err;
        } else if (observable == "Um") {
            y = r.Um;
            e = r.Um_err;
        } else if (observable == "E") {
            y = r.E_mean;
            e = r.E_err;
        } else if (observable == "Cv") {
            y = r.Cv;
            e = r.Cv_err;
        } else {
            throw ConfigError("unknown observable '" + observable + "'");
        }
        if (std::isnan(y)) continue; // channel not measured for this record
        s.x.push_back(r.T);
        s.y.push_back(y);
        s.y_err.push_back(e);
    }
    if (s.x.empty())
        throw MissingSeriesError("no series for d=" + std::to_string(d) +
                                 " L=" + std::to_string(L) + " observable=" + observable);
    return s;
}

namespace {

struct CellDone {
    CellKey key;
    std::uint64_t seed = 0;
    std::string file;
};

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

ResultStore run_sweep(const SweepConfig& config_in, const std::filesystem::path& out_dir,
                      const SweepOptions& options) {
    SweepConfig config = config_in;
    if (options.seed_override) config.master_seed = *options.seed_override;
    config.validate();
    const std::uint64_t cfg_hash = config.hash();
    const int workers =
        resolve_worker_count(options.workers > 0 ? options.workers : config.workers);

    const auto cells_dir = out_dir / "cells";
    std::filesystem::create_directories(cells_dir);
    const auto hash_file = out_dir / "config_hash.txt";
    const auto checkpoint_file = out_dir / "checkpoint.jsonl";

    if (std::filesystem::exists(hash_file)) {
        std::ifstream is(hash_file);
        std::string stored;
        is >> stored;
        if (stored != hex64(cfg_hash))
            throw ConfigError("output directory holds a sweep with a different config hash (" +
                              stored + " vs " + hex64(cfg_hash) + ")");
    } else {
        std::ofstream os(hash_file);
        os << hex64(cfg_hash) << "\n";
    }

    // completed cells from previous runs; a completed sweep re-run with the
    // same config hash recomputes nothing
    std::map<std::string, CellDone> completed;
    if (std::filesystem::exists(checkpoint_file)) {
        bool finished = false;
        if (std::filesystem::exists(out_dir / "manifest.json")) {
            std::ifstream ms(out_dir / "manifest.json");
            std::stringstream ss;
            ss << ms.rdbuf();
            json m = json::parse(ss.str(), nullptr, false);
            finished = !m.is_discarded() && m.value("complete", false);
        }
        if (!finished && !options.resume && options.max_cells < 0)
            throw ConfigError("output directory holds an interrupted sweep; "
                              "pass --resume to complete it");
        std::ifstream is(checkpoint_file);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded()) continue;
            CellDone cd;
            cd.key = {j.at("d").get<int>(), j.at("L").get<int>(),
                      j.at("t_index").get<int>(), j.at("replica").get<int>()};
            cd.seed = j.at("seed").get<std::uint64_t>();
            cd.file = j.at("file").get<std::string>();
            if (std::filesystem::exists(out_dir / cd.file))
                completed[cell_file_name(cd.key)] = cd;
        }
    }

    const std::vector<CellKey> plan = plan_cells(config);
    std::vector<CellKey> todo;
    for (const CellKey& k : plan)
        if (!completed.count(cell_file_name(k))) todo.push_back(k);
    if (options.max_cells >= 0 && static_cast<std::int64_t>(todo.size()) > options.max_cells)
        todo.resize(static_cast<std::size_t>(options.max_cells));

    std::atomic<std::size_t> next{0};
    std::mutex io_mutex;
    std::vector<std::pair<CellKey, std::string>> failures;
    std::ofstream checkpoint(checkpoint_file, std::ios::app);

    auto worker_fn = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            const CellKey key = todo[i];
            try {
                const double T = config.t_values[static_cast<std::size_t>(key.t_index)];
                SimulationParams p = config.params_for(key.d, key.L);
                p.T = T;
                p.seed = derive_seed(config.master_seed, key.d, key.L, key.t_index, key.replica);
                const LatticeGeometry geom = build_lattice(key.L);
                PointStats ps = run_replica(geom, p);

                std::lock_guard<std::mutex> lock(io_mutex);
                const std::string fname = cell_file_name(key);
                write_cell_blob(cells_dir / fname, key, p.seed, T, ps);
                json line = {{"d", key.d},       {"L", key.L},
                             {"t_index", key.t_index}, {"replica", key.replica},
                             {"seed", p.seed},   {"file", "cells/" + fname}};
                checkpoint << line.dump() << "\n";
                checkpoint.flush();
                completed[fname] = {key, p.seed, "cells/" + fname};
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(io_mutex);
                failures.emplace_back(key, e.what());
            }
        }
    };

    {
        std::vector<std::thread> pool;
        const int nthreads = std::min<int>(workers, std::max<std::size_t>(todo.size(), 1));
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker_fn);
        for (auto& th : pool) th.join();
    }

    auto write_manifest = [&](bool complete) {
        json m;
        m["tool"] = "ktclock";
        m["version"] = kToolVersion;
        m["config_hash"] = hex64(cfg_hash);
        m["config"] = json::parse(config.canonical_json());
        m["workers"] = workers;
        m["complete"] = complete;
        m["written_at"] = now_string();
        json cl = json::array();
        for (const CellKey& k : plan) {
            auto it = completed.find(cell_file_name(k));
            if (it == completed.end()) continue;
            cl.push_back({{"d", k.d},
                          {"L", k.L},
                          {"t_index", k.t_index},
                          {"T", config.t_values[static_cast<std::size_t>(k.t_index)]},
                          {"replica", k.replica},
                          {"seed", it->second.seed},
                          {"file", it->second.file}});
        }
        m["cells"] = cl;
        if (!failures.empty()) {
            json fl = json::array();
            for (const auto& [k, msg] : failures)
                fl.push_back({{"d", k.d},
                              {"L", k.L},
                              {"t_index", k.t_index},
                              {"replica", k.replica},
                              {"error", msg}});
            m["failed"] = fl;
        }
        std::ofstream os(out_dir / "manifest.json");
        os << m.dump(2) << "\n";
    };

    if (!failures.empty()) {
        write_manifest(false);
        std::string msg = "sweep finished with failed cells:";
        for (const auto& [k, err] : failures)
            msg += " (d=" + std::to_string(k.d) + ",L=" + std::to_string(k.L) + ",t=" +
                   std::to_string(k.t_index) + ",r=" + std::to_string(k.replica) + "): " + err;
        throw ConfigError(msg);
    }

    bool all_done = true;
    for (const CellKey& k : plan)
        if (!completed.count(cell_file_name(k))) {
            all_done = false;
            break;
        }
    if (!all_done) {
        write_manifest(false);
        ResultStore store(out_dir);
        return store; // interrupted (max_cells hook); resume completes the rest
    }

    // assemble per-(d, L) CSVs from the persisted cells, replicas merged in
    // replica order before extraction
    std::vector<ObservableRecord> records;
    for (int d : config.d_list)
        for (int L : config.L_list) {
            const auto csv_path =
                out_dir / ("results_d" + std::to_string(d) + "_L" + std::to_string(L) + ".csv");
            const auto tmp = csv_path.string() + ".tmp";
            std::ofstream os(tmp, std::ios::trunc);
            os << csv_header() << "\n";
            for (int t = 0; t < static_cast<int>(config.t_values.size()); ++t) {
                PointStats merged;
                std::uint64_t seed0 = 0;
                for (int r = 0; r < config.replicas; ++r) {
                    CellKey key{d, L, t, r};
                    CellKey k2;
                    std::uint64_t seed;
                    double T;
                    PointStats ps = read_cell_blob(cells_dir / cell_file_name(key), k2, seed, T);
                    if (r == 0) {
                        seed0 = seed;
                        merged = std::move(ps);
                    } else {
                        merged = merge_points(std::move(merged), ps);
                    }
                }
                ObservableRecord rec =
                    extract_record(merged, config.t_values[static_cast<std::size_t>(t)], seed0);
                os << record_to_csv(rec) << "\n";
                records.push_back(rec);
            }
            os.close();
            std::filesystem::rename(tmp, csv_path);
        }
    write_manifest(true);

    ResultStore store(out_dir);
    store.set_records(std::move(records));
    return store;
}

namespace {

void write_plot_file(const std::filesystem::path& path, const std::vector<double>& x,
                     const std::vector<double>& y) {
    std::ofstream os(path, std::ios::trunc);
    for (std::size_t i = 0; i < x.size(); ++i)
        os << fmt_double(x[i]) << " " << fmt_double(y[i]) << "\n";
}

json fit_to_json(const FitResult& f) {
    json j;
    j["model"] = f.model == FitModel::Linear ? "linear" : "shifted_power_law";
    j["coeff"] = f.coeff;
    j["coeff_err"] = f.coeff_err;
    j["rss"] = f.rss;
    j["window"] = {f.window_lo, f.window_hi};
    j["n_points"] = f.n_points;
    return j;
}

} // namespace

std::string analyze_store(const ResultStore& store, const std::string& kind,
                          const std::filesystem::path& out_dir,
                          const AnalyzeOptions& options) {
    std::filesystem::create_directories(out_dir);
    json report;
    report["kind"] = kind;

    auto d_values = [&]() {
        std::vector<int> ds = store.d_values();
        if (options.only_d) {
            ds.clear();
            ds.push_back(*options.only_d);
        }
        return ds;
    };
    auto l_values = [&](int d) {
        std::vector<int> ls = store.l_values(d);
        if (options.only_L) {
            ls.clear();
            ls.push_back(*options.only_L);
        }
        return ls;
    };

    if (kind == "derivatives") {
        std::vector<std::string> observables;
        if (options.observable.empty())
            observables = {"GE", "GEt"};
        else
            observables = {options.observable};
        json entries = json::array();
        for (int d : d_values())
            for (int L : l_values(d))
                for (const auto& obs : observables) {
                    Series s = store.series(d, L, obs);
                    Series ds = derivative(s, options.smooth_width);
                    write_plot_file(out_dir / ("deriv_" + obs + "_d" + std::to_string(d) +
                                               "_L" + std::to_string(L) + ".dat"),
                                    ds.x, ds.y);
                    int imax = 0;
                    for (int i = 1; i < static_cast<int>(ds.y.size()); ++i)
                        if (ds.y[i] > ds.y[imax]) imax = i;
                    entries.push_back({{"d", d},
                                       {"L", L},
                                       {"observable", obs},
                                       {"argmax_x", ds.x[imax]},
                                       {"max_value", ds.y[imax]}});
                }
        if (entries.empty())
            throw MissingSeriesError("derivatives: store has no matching series");
        report["series"] = entries;
    } else if (kind == "q-peak") {
        json entries = json::array();
        for (int d : d_values())
            for (int L : l_values(d)) {
                Series q = store.series(d, L, "Q");
                write_plot_file(out_dir / ("q_d" + std::to_string(d) + "_L" +
                                           std::to_string(L) + ".dat"),
                                q.x, q.y);
                PeakResult pk = find_peak(q);
                entries.push_back({{"d", d},
                                   {"L", L},
                                   {"T_Q", pk.x_peak},
                                   {"uncertainty", pk.uncertainty}});
            }
        if (entries.empty()) throw MissingSeriesError("q-peak: store has no Q series");
        report["peaks"] = entries;
    } else if (kind == "fits") {
        json entries = json::array();
        for (int d : d_values()) {
            auto ls = l_values(d);
            if (ls.empty()) continue;
            const int L = ls.back(); // largest system size
            Series q = store.series(d, L, "Q");
            PeakResult pk = find_peak(q);
            const Window lin_w = options.linear_window
                                     ? *options.linear_window
                                     : Window{pk.x_peak + 0.05, 0.85};
            const Window pow_w =
                options.power_window ? *options.power_window : Window{1.05, 2.0};
            FitResult flin = fit_linear(q, lin_w);
            FitResult fpow = fit_powerlaw(q, pow_w);

            json entry;
            entry["d"] = d;
            entry["L"] = L;
            entry["T_Q"] = pk.x_peak;
            entry["linear"] = fit_to_json(flin);
            entry["power"] = fit_to_json(fpow);
            try {
                const auto bracket = scan_intersection_bracket(flin, fpow, Window{0.6, 1.4});
                if (!bracket) throw FitError("no sign change on [0.6, 1.4]");
                const double x_star = intersect_fits(flin, fpow, *bracket);
                entry["intersection"] = x_star;
                entry["intersection_err"] = intersect_uncertainty(flin, fpow, x_star);
            } catch (const FitError& e) {
                entry["intersection"] = nullptr;
                entry["intersection_error"] = e.what();
            }
            entries.push_back(entry);

            write_plot_file(out_dir / ("q_d" + std::to_string(d) + "_L" +
                                       std::to_string(L) + ".dat"),
                            q.x, q.y);
            std::vector<double> xs, yl, yp;
            const double lo = lin_w.lo, hi = pow_w.hi;
            for (int i = 0; i <= 200; ++i) {
                const double x = lo + (hi - lo) * i / 200.0;
                xs.push_back(x);
                yl.push_back(flin(x));
                yp.push_back(fpow(x));
            }
            write_plot_file(out_dir / ("fit_linear_d" + std::to_string(d) + ".dat"), xs, yl);
            write_plot_file(out_dir / ("fit_power_d" + std::to_string(d) + ".dat"), xs, yp);
        }
        if (entries.empty()) throw MissingSeriesError("fits: store has no Q series");
        report["fits"] = entries;
    } else if (kind == "crossings") {
        json entries = json::array();
        for (int d : d_values()) {
            auto ls = store.l_values(d);
            if (ls.size() < 2)
                throw MissingSeriesError("crossings: need Um series for at least two L at d=" +
                                         std::to_string(d));
            std::vector<Series> um;
            for (int L : ls) {
                um.push_back(store.series(d, L, "Um"));
                write_plot_file(out_dir / ("um_d" + std::to_string(d) + "_L" +
                                           std::to_string(L) + ".dat"),
                                um.back().x, um.back().y);
            }
            CrossingResult cr = cumulant_crossing(um, options.crossing_window);
            entries.push_back({{"d", d},
                               {"L", ls},
                               {"T_c", cr.t_c},
                               {"spread", cr.spread},
                               {"pairwise", cr.pairwise}});
        }
        if (entries.empty()) throw MissingSeriesError("crossings: store has no Um series");
        report["crossings"] = entries;
    } else {
        throw ConfigError("analyze: unknown report kind '" + kind + "'");
    }

    const std::string text = report.dump(2);
    std::ofstream os(out_dir / ("report_" + kind + ".json"));
    os << text << "\n";
    return text;
}

} // namespace ktclock
