#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fwalk/core.hpp"
#include "fwalk/graph.hpp"
#include "fwalk/kernel.hpp"
#include "fwalk/ode.hpp"
#include "fwalk/rng.hpp"
#include "fwalk/simulator.hpp"
#include "fwalk/spectral.hpp"

namespace fwalk {

using json = nlohmann::json;

enum class KernelKind { combinatorial, random_walk, dtmc_file };

struct RemovalSpecItem {
    double t = 0.0;
    std::optional<NodeSet> explicit_set;  // indices in the topology current at time t
    int random_count = 0;                 // used when explicit_set is absent
};

struct ExperimentConfig {
    std::string graph_path;
    int index_base = 0;
    bool symmetrize = false;
    KernelKind kernel_kind = KernelKind::combinatorial;
    std::string dtmc_path;
    int n = 0;
    double kappa = 0.0;
    double T = 0.0;
    int runs = 1;
    std::uint64_t master_seed = 0;
    std::vector<double> sample_times;  // resolved grid, strictly increasing in (0, T]
    std::vector<RemovalSpecItem> schedule;
    bool record_instantaneous = false;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw ValidationError("bad numeric field '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        throw ValidationError("bad numeric field '" + s + "'");
    } catch (const std::out_of_range&) {
        throw ValidationError("numeric field out of range '" + s + "'");
    }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

inline KernelKind kernel_kind_from_string(const std::string& s) {
    if (s == "combinatorial") return KernelKind::combinatorial;
    if (s == "random_walk") return KernelKind::random_walk;
    if (s == "dtmc_file") return KernelKind::dtmc_file;
    throw ValidationError("unknown kernel kind '" + s + "'");
}

inline std::string to_string(KernelKind k) {
    switch (k) {
        case KernelKind::combinatorial: return "combinatorial";
        case KernelKind::random_walk: return "random_walk";
        case KernelKind::dtmc_file: return "dtmc_file";
    }
    return "?";
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    try {
        cfg.graph_path = j.at("graph").get<std::string>();
        cfg.index_base = j.value("index_base", 0);
        cfg.symmetrize = j.value("symmetrize", false);
        std::string kind = j.value("kernel", std::string("combinatorial"));
        cfg.kernel_kind = kernel_kind_from_string(kind);
        cfg.dtmc_path = j.value("dtmc_file", std::string());
        cfg.n = j.at("n").get<int>();
        cfg.kappa = j.at("kappa").get<double>();
        cfg.T = j.at("T").get<double>();
        cfg.runs = j.value("runs", 1);
        cfg.master_seed = j.value("master_seed", std::uint64_t{0});
        cfg.record_instantaneous = j.value("record_instantaneous", false);

        const json& st = j.at("sample_times");
        if (st.is_object() && st.contains("step")) {
            double step = st.at("step").get<double>();
            if (!(step > 0.0)) throw ValidationError("sample step must be positive");
            for (double t = step; t <= cfg.T + 1e-12 * cfg.T; t += step)
                cfg.sample_times.push_back(std::min(t, cfg.T));
        } else if (st.is_object() && st.contains("grid")) {
            cfg.sample_times = st.at("grid").get<std::vector<double>>();
        } else if (st.is_array()) {
            cfg.sample_times = st.get<std::vector<double>>();
        } else {
            throw ValidationError("sample_times must be an array, {\"step\": s}, or {\"grid\": [...]}");
        }

        if (j.contains("schedule")) {
            for (const json& item : j.at("schedule")) {
                RemovalSpecItem r;
                r.t = item.at("t").get<double>();
                if (item.contains("remove")) {
                    r.explicit_set = item.at("remove").get<NodeSet>();
                } else if (item.contains("remove_random")) {
                    r.random_count = item.at("remove_random").get<int>();
                    if (r.random_count < 1)
                        throw ValidationError("remove_random must be at least 1");
                } else {
                    throw ValidationError("schedule item needs 'remove' or 'remove_random'");
                }
                cfg.schedule.push_back(std::move(r));
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config field error: ") + e.what());
    }

    if (cfg.n < 1) throw ValidationError("n must be at least 1");
    if (!(cfg.kappa > 0.0)) throw ValidationError("kappa must be positive");
    if (!(cfg.T > 0.0)) throw ValidationError("T must be positive");
    if (cfg.runs < 1) throw ValidationError("runs must be at least 1");
    if (cfg.sample_times.empty()) throw ValidationError("sample_times must be nonempty");
    for (std::size_t i = 0; i < cfg.sample_times.size(); ++i) {
        double t = cfg.sample_times[i];
        if (!(t > 0.0) || t > cfg.T)
            throw ValidationError("sample times must lie in (0, T]");
        if (i > 0 && !(t > cfg.sample_times[i - 1]))
            throw ValidationError("sample times must be strictly increasing");
    }
    for (std::size_t i = 0; i < cfg.schedule.size(); ++i) {
        if (!(cfg.schedule[i].t > 0.0) || cfg.schedule[i].t >= cfg.T)
            throw ValidationError("schedule times must lie strictly inside (0, T)");
        if (i > 0 && !(cfg.schedule[i].t > cfg.schedule[i - 1].t))
            throw ValidationError("schedule times must be strictly increasing");
    }
    if (cfg.kernel_kind == KernelKind::dtmc_file && cfg.dtmc_path.empty())
        throw ValidationError("kernel 'dtmc_file' requires a 'dtmc_file' path");
    if (cfg.kernel_kind == KernelKind::dtmc_file && !cfg.schedule.empty())
        throw ValidationError("node-removal schedules require a graph-derived kernel");
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

// Dense row-stochastic matrix from a text file: one row per line,
// whitespace-separated.
inline Matrix load_dense_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open matrix file '" + path + "'");
    std::vector<Vec> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        Vec row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!ls.eof()) throw ValidationError("bad matrix row in '" + path + "'");
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError("matrix file '" + path + "' is empty");
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size())
            throw ValidationError("ragged matrix file '" + path + "'");
        for (std::size_t j = 0; j < rows[0].size(); ++j) m(i, j) = rows[i][j];
    }
    return m;
}

// {n, rates (dense row-major), pi?}
inline json kernel_to_json(const Kernel& k) {
    json j;
    j["n"] = k.n();
    j["rates"] = k.q.a;
    if (k.has_pi()) j["pi"] = k.pi;
    return j;
}

inline Kernel kernel_from_json(const json& j) {
    int n = 0;
    std::vector<double> rates;
    Vec pi;
    try {
        n = j.at("n").get<int>();
        rates = j.at("rates").get<std::vector<double>>();
        if (j.contains("pi")) pi = j.at("pi").get<Vec>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("kernel JSON field error: ") + e.what());
    }
    if (n < 1) throw ValidationError("kernel JSON: n must be at least 1");
    if (rates.size() != static_cast<std::size_t>(n) * n)
        throw ValidationError("kernel JSON: rates must hold n*n entries row-major");
    Matrix q(n, n);
    q.a = std::move(rates);
    if (!pi.empty()) return kernel_from_rates(std::move(q), std::move(pi));
    Kernel k = kernel_from_rates(std::move(q));
    k.pi = stationary_distribution(k);
    k.reversible = check_detailed_balance(k) <= 1e-10;
    return k;
}

inline Kernel load_kernel_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open kernel file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("kernel file is not valid JSON: ") + e.what());
    }
    return kernel_from_json(j);
}

// Graph whose edges are the symmetrized support of the kernel's off-diagonal
// rates; used for connectivity checks and walker bookkeeping when the kernel
// does not come from an explicit graph.
inline Graph graph_from_kernel_support(const Kernel& k) {
    std::vector<std::tuple<int, int, double>> edges;
    const int N = k.n();
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j)
            if (k.q(i, j) > 0.0 || k.q(j, i) > 0.0) edges.emplace_back(i, j, 1.0);
    return make_graph(N, edges);
}

inline Kernel build_kernel(const Graph& g, KernelKind kind, const std::string& dtmc_path) {
    switch (kind) {
        case KernelKind::combinatorial: return combinatorial_kernel(g);
        case KernelKind::random_walk: return random_walk_kernel(g);
        case KernelKind::dtmc_file: return from_dtmc(load_dense_matrix(dtmc_path));
    }
    throw ValidationError("unreachable kernel kind");
}

// Reserved stream index for schedule randomness so run streams 0..runs-1
// never collide with it.
inline constexpr std::uint64_t SCHEDULE_STREAM = 0x8000000000000000ull;

struct ResolvedSchedule {
    std::vector<Epoch> epochs;               // [0] is the initial topology
    std::vector<FiedlerResult> fiedler;      // per epoch
    std::vector<NodeSet> removed_labels;     // original input labels, per removal
    double removed_fraction = 0.0;
    json echo;  // fully resolved removal sets for replay
};

// Resolves every removal (drawing random sets once), validates
// connectivity, and computes the spectral reference of each epoch.
inline ResolvedSchedule build_dynamic_schedule(const Graph& g0, const ExperimentConfig& cfg) {
    ResolvedSchedule rs;
    Epoch first;
    first.t_start = 0.0;
    first.graph = g0;
    first.kernel = build_kernel(g0, cfg.kernel_kind, cfg.dtmc_path);
    rs.epochs.push_back(std::move(first));

    Rng rng = Rng::stream(cfg.master_seed, SCHEDULE_STREAM);
    json echo_items = json::array();
    int removed_total = 0;
    for (const RemovalSpecItem& item : cfg.schedule) {
        const Graph& cur = rs.epochs.back().graph;
        NodeSet removal;
        if (item.explicit_set) {
            removal = *item.explicit_set;
            std::sort(removal.begin(), removal.end());
            for (int v : removal)
                if (v < 0 || v >= cur.n)
                    throw ValidationError("scheduled removal index out of range at t = " +
                                          std::to_string(item.t));
        } else {
            removal = sample_removable_set(cur, item.random_count, rng);
        }
        Graph next = remove_nodes(cur, removal);
        if (!is_connected(next))
            throw ValidationError("scheduled removal at t = " + std::to_string(item.t) +
                                  " disconnects the graph");
        NodeSet labels;
        for (int v : removal) labels.push_back(static_cast<int>(cur.labels[v]));
        rs.removed_labels.push_back(labels);
        removed_total += static_cast<int>(removal.size());

        json e;
        e["t"] = item.t;
        e["remove"] = removal;  // epoch-relative indices, replayable as-is
        e["labels"] = labels;
        echo_items.push_back(std::move(e));

        Epoch ep;
        ep.t_start = item.t;
        ep.removed = removal;
        ep.kernel = build_kernel(next, cfg.kernel_kind, cfg.dtmc_path);
        ep.graph = std::move(next);
        rs.epochs.push_back(std::move(ep));
    }
    rs.removed_fraction = g0.n ? static_cast<double>(removed_total) / g0.n : 0.0;
    rs.echo = std::move(echo_items);
    for (const Epoch& ep : rs.epochs) rs.fiedler.push_back(fiedler(ep.kernel));
    return rs;
}

struct MetricSeries {
    std::vector<double> t;
    std::vector<int> epoch;
    std::vector<double> rq_mean, cs_mean;
    std::vector<std::vector<double>> rq_runs, cs_runs;    // [run][row]
    std::vector<std::vector<double>> rqi_runs, csi_runs;  // instantaneous, optional
    std::vector<double> rqi_mean, csi_mean;
    bool has_instantaneous = false;
    std::vector<double> lambda2_by_epoch;
    std::vector<bool> degenerate_by_epoch;
    std::string config_echo;  // one-line JSON with resolved randomness
};

inline std::string to_csv(const MetricSeries& m) {
    std::ostringstream out;
    out << "# fwalk-metrics v1\n";
    if (!m.config_echo.empty()) out << "# config: " << m.config_echo << "\n";
    out << "# lambda2:";
    for (std::size_t e = 0; e < m.lambda2_by_epoch.size(); ++e) {
        out << (e ? "," : " ") << detail::format_double(m.lambda2_by_epoch[e]);
        if (m.degenerate_by_epoch[e]) out << "(degenerate)";
    }
    out << "\n";
    const std::size_t runs = m.rq_runs.size();
    out << "t,epoch,RQ_mean,CS_mean";
    for (std::size_t r = 0; r < runs; ++r) out << ",RQ_run_" << r;
    for (std::size_t r = 0; r < runs; ++r) out << ",CS_run_" << r;
    if (m.has_instantaneous) {
        out << ",RQinst_mean,CSinst_mean";
        for (std::size_t r = 0; r < runs; ++r) out << ",RQinst_run_" << r;
        for (std::size_t r = 0; r < runs; ++r) out << ",CSinst_run_" << r;
    }
    out << "\n";
    for (std::size_t row = 0; row < m.t.size(); ++row) {
        out << detail::format_double(m.t[row]) << ',' << m.epoch[row] << ','
            << detail::format_double(m.rq_mean[row]) << ',' << detail::format_double(m.cs_mean[row]);
        for (std::size_t r = 0; r < runs; ++r) out << ',' << detail::format_double(m.rq_runs[r][row]);
        for (std::size_t r = 0; r < runs; ++r) out << ',' << detail::format_double(m.cs_runs[r][row]);
        if (m.has_instantaneous) {
            out << ',' << detail::format_double(m.rqi_mean[row]) << ','
                << detail::format_double(m.csi_mean[row]);
            for (std::size_t r = 0; r < runs; ++r)
                out << ',' << detail::format_double(m.rqi_runs[r][row]);
            for (std::size_t r = 0; r < runs; ++r)
                out << ',' << detail::format_double(m.csi_runs[r][row]);
        }
        out << "\n";
    }
    return out.str();
}

inline MetricSeries parse_metric_series(const std::string& text) {
    MetricSeries m;
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("# config: ", 0) == 0) {
            m.config_echo = line.substr(10);
            continue;
        }
        if (line.rfind("# lambda2:", 0) == 0) {
            std::string rest = line.substr(10);
            if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
            for (std::string& cell : detail::split_csv_line(rest)) {
                if (cell.empty()) continue;
                bool degenerate = false;
                auto pos = cell.find("(degenerate)");
                if (pos != std::string::npos) {
                    degenerate = true;
                    cell.erase(pos);
                }
                m.lambda2_by_epoch.push_back(detail::parse_double(cell));
                m.degenerate_by_epoch.push_back(degenerate);
            }
            continue;
        }
        if (line[0] == '#') continue;
        header = detail::split_csv_line(line);
        break;
    }
    if (header.empty() || header[0] != "t")
        throw ValidationError("metric CSV: missing header row");
    std::size_t runs = 0;
    for (const std::string& h : header)
        if (h.rfind("RQ_run_", 0) == 0) ++runs;
    m.has_instantaneous =
        std::find(header.begin(), header.end(), "RQinst_mean") != header.end();
    m.rq_runs.assign(runs, {});
    m.cs_runs.assign(runs, {});
    if (m.has_instantaneous) {
        m.rqi_runs.assign(runs, {});
        m.csi_runs.assign(runs, {});
    }
    const std::size_t expected =
        4 + 2 * runs + (m.has_instantaneous ? 2 + 2 * runs : 0);
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != expected)
            throw ValidationError("metric CSV: row has " + std::to_string(cells.size()) +
                                  " cells, expected " + std::to_string(expected));
        std::size_t c = 0;
        m.t.push_back(detail::parse_double(cells[c++]));
        m.epoch.push_back(static_cast<int>(detail::parse_double(cells[c++])));
        m.rq_mean.push_back(detail::parse_double(cells[c++]));
        m.cs_mean.push_back(detail::parse_double(cells[c++]));
        for (std::size_t r = 0; r < runs; ++r) m.rq_runs[r].push_back(detail::parse_double(cells[c++]));
        for (std::size_t r = 0; r < runs; ++r) m.cs_runs[r].push_back(detail::parse_double(cells[c++]));
        if (m.has_instantaneous) {
            m.rqi_mean.push_back(detail::parse_double(cells[c++]));
            m.csi_mean.push_back(detail::parse_double(cells[c++]));
            for (std::size_t r = 0; r < runs; ++r)
                m.rqi_runs[r].push_back(detail::parse_double(cells[c++]));
            for (std::size_t r = 0; r < runs; ++r)
                m.csi_runs[r].push_back(detail::parse_double(cells[c++]));
        }
    }
    return m;
}

namespace detail {

struct RunMetrics {
    std::vector<double> rq, cs, rqi, csi;
};

// Estimator metrics of one trajectory at every snapshot, each row judged
// against its epoch's spectral reference.
inline RunMetrics metrics_of_run(const Trajectory& traj, const ResolvedSchedule& rs,
                                 bool instantaneous) {
    RunMetrics rm;
    for (const SimSnapshot& s : traj.snapshots) {
        const Kernel& k = rs.epochs[s.epoch].kernel;
        const FiedlerResult& f = rs.fiedler[s.epoch];
        Vec zhat(s.x_avg.size());
        for (std::size_t i = 0; i < zhat.size(); ++i) zhat[i] = s.x_avg[i] - s.y_avg[i];
        if (norm2(zhat) < 1e-14) {
            rm.rq.push_back(std::numeric_limits<double>::quiet_NaN());
            rm.cs.push_back(0.0);
        } else {
            rm.rq.push_back(rayleigh_quotient(zhat, k));
            rm.cs.push_back(cosine_similarity(zhat, f.v2, k));
        }
        if (instantaneous) {
            Vec zi(s.x_inst.size());
            for (std::size_t i = 0; i < zi.size(); ++i) zi[i] = s.x_inst[i] - s.y_inst[i];
            if (norm2(zi) < 1e-14) {
                rm.rqi.push_back(std::numeric_limits<double>::quiet_NaN());
                rm.csi.push_back(0.0);
            } else {
                rm.rqi.push_back(rayleigh_quotient(zi, k));
                rm.csi.push_back(cosine_similarity(zi, f.v2, k));
            }
        }
    }
    return rm;
}

inline std::vector<double> column_mean(const std::vector<std::vector<double>>& runs) {
    if (runs.empty()) return {};
    std::vector<double> mean(runs[0].size(), 0.0);
    for (const auto& r : runs)
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += r[i];
    for (double& v : mean) v /= static_cast<double>(runs.size());
    return mean;
}

}  // namespace detail

// Multi-run experiment driver. Runs fan out over at most `jobs` worker
// threads; per-run randomness comes from independent streams of the master
// seed, so the aggregate is independent of scheduling.
inline MetricSeries run_experiment(const ExperimentConfig& cfg, int jobs = 1) {
    ParseOptions po;
    po.index_base = cfg.index_base;
    po.directed_input_symmetrize = cfg.symmetrize;
    Graph g = load_edge_list(cfg.graph_path, po);
    if (cfg.kernel_kind == KernelKind::dtmc_file) {
        Kernel k = build_kernel(g, cfg.kernel_kind, cfg.dtmc_path);
        if (k.n() != g.n)
            throw ValidationError("dtmc matrix size does not match the graph");
    }
    if (!is_connected(g)) throw ValidationError("experiment graph must be connected");

    ResolvedSchedule rs = build_dynamic_schedule(g, cfg);

    json echo;
    echo["graph"] = cfg.graph_path;
    echo["index_base"] = cfg.index_base;
    echo["symmetrize"] = cfg.symmetrize;
    echo["kernel"] = to_string(cfg.kernel_kind);
    if (!cfg.dtmc_path.empty()) echo["dtmc_file"] = cfg.dtmc_path;
    echo["n"] = cfg.n;
    echo["kappa"] = cfg.kappa;
    echo["T"] = cfg.T;
    echo["runs"] = cfg.runs;
    echo["master_seed"] = cfg.master_seed;
    echo["sample_times"] = cfg.sample_times;
    echo["resolved_schedule"] = rs.echo;
    echo["record_instantaneous"] = cfg.record_instantaneous;

    std::vector<detail::RunMetrics> per_run(cfg.runs);
    std::vector<int> epoch_of_row;
    std::atomic<int> next_run{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mu;

    auto worker = [&]() {
        while (!failed.load(std::memory_order_relaxed)) {
            int r = next_run.fetch_add(1);
            if (r >= cfg.runs) return;
            try {
                RunOptions opts;
                Trajectory traj = run_epochs(rs.epochs, cfg.n, cfg.kappa, cfg.T,
                                             Rng::stream(cfg.master_seed, static_cast<std::uint64_t>(r)),
                                             cfg.sample_times, opts);
                per_run[r] = detail::metrics_of_run(traj, rs, cfg.record_instantaneous);
                if (r == 0) {
                    epoch_of_row.clear();
                    for (const SimSnapshot& s : traj.snapshots) epoch_of_row.push_back(s.epoch);
                }
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lk(error_mu);
                if (!failed.exchange(true)) first_error = e.what();
                return;
            }
        }
    };

    int nworkers = std::max(1, std::min(jobs, cfg.runs));
    if (nworkers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nworkers);
        for (int w = 0; w < nworkers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failed.load()) throw NumericError("experiment run failed: " + first_error);

    MetricSeries m;
    m.t = cfg.sample_times;
    m.epoch = epoch_of_row;
    for (const FiedlerResult& f : rs.fiedler) {
        m.lambda2_by_epoch.push_back(f.lambda2);
        m.degenerate_by_epoch.push_back(f.degenerate);
    }
    for (detail::RunMetrics& rm : per_run) {
        m.rq_runs.push_back(std::move(rm.rq));
        m.cs_runs.push_back(std::move(rm.cs));
        if (cfg.record_instantaneous) {
            m.rqi_runs.push_back(std::move(rm.rqi));
            m.csi_runs.push_back(std::move(rm.csi));
        }
    }
    m.rq_mean = detail::column_mean(m.rq_runs);
    m.cs_mean = detail::column_mean(m.cs_runs);
    m.has_instantaneous = cfg.record_instantaneous;
    if (cfg.record_instantaneous) {
        m.rqi_mean = detail::column_mean(m.rqi_runs);
        m.csi_mean = detail::column_mean(m.csi_runs);
    }
    m.config_echo = echo.dump();
    return m;
}

struct CompareConfig {
    std::string graph_path;
    int index_base = 0;
    bool symmetrize = false;
    KernelKind kernel_kind = KernelKind::combinatorial;
    std::string dtmc_path;
    double kappa = 0.0;
    double T = 0.0;
    std::vector<int> n_list;
    int seeds = 1;
    std::uint64_t master_seed = 0;
    double eps = 0.5;
    int m_samples = 200;
    double grid_step = 0.0;  // 0 selects T/100
    int x_node = 0;
    int y_node = -1;  // -1 selects N/2
};

inline CompareConfig parse_compare_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    CompareConfig c;
    try {
        c.graph_path = j.at("graph").get<std::string>();
        c.index_base = j.value("index_base", 0);
        c.symmetrize = j.value("symmetrize", false);
        c.kernel_kind = kernel_kind_from_string(j.value("kernel", std::string("combinatorial")));
        c.dtmc_path = j.value("dtmc_file", std::string());
        c.kappa = j.at("kappa").get<double>();
        c.T = j.at("T").get<double>();
        c.n_list = j.at("n_list").get<std::vector<int>>();
        c.seeds = j.value("seeds", 30);
        c.master_seed = j.value("master_seed", std::uint64_t{0});
        c.eps = j.value("eps", 0.5);
        c.m_samples = j.value("m_samples", 200);
        c.grid_step = j.value("grid_step", 0.0);
        c.x_node = j.value("x_node", 0);
        c.y_node = j.value("y_node", -1);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config field error: ") + e.what());
    }
    if (c.n_list.empty()) throw ValidationError("n_list must be nonempty");
    for (int n : c.n_list)
        if (n < 1) throw ValidationError("every n must be at least 1");
    if (c.seeds < 1) throw ValidationError("seeds must be at least 1");
    if (!(c.kappa > 0.0) || !(c.T > 0.0)) throw ValidationError("kappa and T must be positive");
    return c;
}

struct CompareReport {
    std::vector<int> n;
    std::vector<std::vector<double>> sup_by_seed;  // [n_idx][seed]
    std::vector<double> median;
    std::vector<double> bound_raw, bound_prob;
    double m_estimate = 0.0;
    int m_samples = 0;
    std::string config_echo;
};

// Jump-path-vs-flow deviation sweep. All walkers of one group start on
// x_node and the other on y_node, so the empirical densities equal the flow
// initial condition exactly for every n.
inline CompareReport compare_sim_vs_ode(const CompareConfig& cfg) {
    ParseOptions po;
    po.index_base = cfg.index_base;
    po.directed_input_symmetrize = cfg.symmetrize;
    Graph g = load_edge_list(cfg.graph_path, po);
    if (!is_connected(g)) throw ValidationError("comparison graph must be connected");
    Kernel k = build_kernel(g, cfg.kernel_kind, cfg.dtmc_path);
    const int N = g.n;
    int xn = cfg.x_node, yn = cfg.y_node < 0 ? N / 2 : cfg.y_node;
    if (xn < 0 || xn >= N || yn < 0 || yn >= N || xn == yn)
        throw ValidationError("compare: x_node and y_node must be distinct valid nodes");

    Vec x0(N, 0.0), y0(N, 0.0);
    x0[xn] = 1.0;
    y0[yn] = 1.0;
    OdeResult ode = integrate(x0, y0, k, cfg.kappa, cfg.T);

    double step = cfg.grid_step > 0.0 ? cfg.grid_step : cfg.T / 100.0;
    std::vector<double> grid;
    for (double t = step; t < cfg.T; t += step) grid.push_back(t);
    grid.push_back(cfg.T);

    LipschitzEstimate lip = estimate_lipschitz_M(k, cfg.kappa, cfg.m_samples);

    CompareReport rep;
    rep.m_estimate = lip.value;
    rep.m_samples = lip.samples;
    std::vector<Epoch> epochs(1);
    epochs[0].graph = g;
    epochs[0].kernel = k;
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        const int n = cfg.n_list[ni];
        ExplicitInit init;
        init.X.assign(N, 0);
        init.Y.assign(N, 0);
        init.X[xn] = n;
        init.Y[yn] = n;
        std::vector<double> sups;
        for (int s = 0; s < cfg.seeds; ++s) {
            RunOptions opts;
            opts.init = init;
            std::uint64_t run_index = (static_cast<std::uint64_t>(ni) << 32) | static_cast<std::uint64_t>(s);
            Trajectory traj = run_epochs(epochs, n, cfg.kappa, cfg.T,
                                         Rng::stream(cfg.master_seed, run_index), grid, opts);
            sups.push_back(sup_deviation(traj, ode, grid));
        }
        std::vector<double> sorted = sups;
        std::sort(sorted.begin(), sorted.end());
        double med = (cfg.seeds % 2) ? sorted[cfg.seeds / 2]
                                     : 0.5 * (sorted[cfg.seeds / 2 - 1] + sorted[cfg.seeds / 2]);
        DeviationBoundResult b =
            deviation_bound({n, N, cfg.kappa, cfg.T, cfg.eps, lip.value});
        rep.n.push_back(n);
        rep.sup_by_seed.push_back(std::move(sups));
        rep.median.push_back(med);
        rep.bound_raw.push_back(b.raw);
        rep.bound_prob.push_back(b.probability);
    }

    json echo;
    echo["graph"] = cfg.graph_path;
    echo["kernel"] = to_string(cfg.kernel_kind);
    echo["kappa"] = cfg.kappa;
    echo["T"] = cfg.T;
    echo["n_list"] = cfg.n_list;
    echo["seeds"] = cfg.seeds;
    echo["master_seed"] = cfg.master_seed;
    echo["eps"] = cfg.eps;
    echo["m_estimate"] = lip.value;
    echo["m_samples"] = lip.samples;
    echo["x_node"] = xn;
    echo["y_node"] = yn;
    echo["grid_step"] = step;
    rep.config_echo = echo.dump();
    return rep;
}

inline std::string to_csv(const CompareReport& rep) {
    std::ostringstream out;
    out << "# fwalk-compare v1\n";
    if (!rep.config_echo.empty()) out << "# config: " << rep.config_echo << "\n";
    std::size_t seeds = rep.sup_by_seed.empty() ? 0 : rep.sup_by_seed[0].size();
    out << "n,median_sup,bound_raw,bound_prob";
    for (std::size_t s = 0; s < seeds; ++s) out << ",sup_seed_" << s;
    out << "\n";
    for (std::size_t i = 0; i < rep.n.size(); ++i) {
        out << rep.n[i] << ',' << detail::format_double(rep.median[i]) << ','
            << detail::format_double(rep.bound_raw[i]) << ','
            << detail::format_double(rep.bound_prob[i]);
        for (double s : rep.sup_by_seed[i]) out << ',' << detail::format_double(s);
        out << "\n";
    }
    return out.str();
}

// Event stream export: one row per event.
inline std::string events_to_csv(const Trajectory& traj) {
    if (!traj.events_recorded)
        throw ValidationError("events_to_csv: trajectory has no recorded events");
    std::ostringstream out;
    out << "t,event_kind,type,from,to\n";
    for (const SimEvent& e : traj.events) {
        out << detail::format_double(e.t) << ','
            << (e.kind == EventKind::walk ? "walk" : "kill_relocate") << ','
            << (e.type == WalkerType::x ? 'x' : 'y') << ',' << e.from << ',' << e.to << "\n";
    }
    return out.str();
}

}  // namespace fwalk
