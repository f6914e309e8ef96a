// Command-line front end: spectral oracle queries, flow integration,
// stochastic experiments (static and with node-removal schedules), the
// jump-path-vs-flow deviation sweep, and the concentration bound calculator.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fwalk/harness.hpp"

namespace {

using namespace fwalk;

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw ValidationError("cannot open output file '" + out_path + "'");
    f << text;
    if (!f) throw ValidationError("write to '" + out_path + "' failed");
}

struct GraphInput {
    std::string graph_path;
    std::string kernel_json_path;
    std::string kernel_name = "combinatorial";
    int index_base = 0;
    bool symmetrize = false;
};

void add_graph_flags(CLI::App* cmd, GraphInput& gi, bool allow_kernel_json) {
    cmd->add_option("--graph", gi.graph_path, "edge-list file ('u v' or 'u v w' per line)");
    if (allow_kernel_json)
        cmd->add_option("--kernel-json", gi.kernel_json_path,
                        "kernel as JSON {n, rates, pi?} instead of a graph");
    cmd->add_option("--kernel", gi.kernel_name,
                    "kernel derived from the graph: combinatorial|random_walk")
        ->check(CLI::IsMember({"combinatorial", "random_walk"}));
    cmd->add_option("--index-base", gi.index_base, "node indexing of the edge list")
        ->check(CLI::IsMember({0, 1}));
    cmd->add_flag("--symmetrize", gi.symmetrize,
                  "collapse arc pairs listed in both directions with equal weight");
}

// Loads the kernel (and the graph when one was given).
std::pair<std::optional<Graph>, Kernel> resolve_kernel(const GraphInput& gi) {
    if (!gi.kernel_json_path.empty()) {
        if (!gi.graph_path.empty())
            throw ValidationError("give either --graph or --kernel-json, not both");
        return {std::nullopt, load_kernel_json(gi.kernel_json_path)};
    }
    if (gi.graph_path.empty()) throw ValidationError("--graph (or --kernel-json) is required");
    ParseOptions po;
    po.index_base = gi.index_base;
    po.directed_input_symmetrize = gi.symmetrize;
    Graph g = load_edge_list(gi.graph_path, po);
    if (!is_connected(g)) throw ValidationError("input graph must be connected");
    Kernel k = gi.kernel_name == "random_walk" ? random_walk_kernel(g) : combinatorial_kernel(g);
    return {std::move(g), std::move(k)};
}

int cmd_spectral(const GraphInput& gi, bool partition, const std::string& out_path) {
    auto [g, k] = resolve_kernel(gi);
    KernelEigen e = kernel_eigen(k);
    FiedlerResult f = fiedler(k);
    NodeSet part;
    if (partition) part = sign_partition(f.v2).first;

    std::ostringstream out;
    out << "# fwalk-spectral v1\n";
    out << "# lambda2: " << detail::format_double(f.lambda2);
    if (f.degenerate) out << " (degenerate)";
    out << "\n";
    out << "index,eigenvalue,fiedler_v2";
    if (partition) out << ",in_S";
    out << "\n";
    std::vector<char> in_s(k.n(), 0);
    for (int v : part) in_s[v] = 1;
    for (int i = 0; i < k.n(); ++i) {
        out << i << ',' << detail::format_double(e.lambda[i]) << ','
            << detail::format_double(f.v2[i]);
        if (partition) out << ',' << static_cast<int>(in_s[i]);
        out << "\n";
    }
    if (partition) {
        if (!g) throw ValidationError("--partition needs --graph (RCut uses edge weights)");
        out << "# rcut: " << detail::format_double(rcut_value(*g, part)) << "\n";
    }
    emit(out_path, out.str());
    return 0;
}

int cmd_ode(const GraphInput& gi, double kappa, double T, double dt_max,
            const std::string& init, std::uint64_t seed, const std::string& out_path) {
    auto [g, k] = resolve_kernel(gi);
    const int N = k.n();
    FiedlerResult f = fiedler(k);

    Vec x0, y0;
    if (init == "random") {
        Rng rng(seed);
        Vec z(N);
        double mean = 0.0;
        for (double& v : z) {
            v = rng.gaussian();
            mean += v;
        }
        mean /= N;
        for (double& v : z) v -= mean;
        auto [x, y] = embed_direction(z);
        x0 = std::move(x);
        y0 = std::move(y);
    } else {
        // Explicit file: two non-comment lines of N numbers, x then y.
        Matrix m = load_dense_matrix(init);
        if (m.rows != 2 || static_cast<int>(m.cols) != N)
            throw ValidationError("--init file must hold two rows of " + std::to_string(N) +
                                  " numbers (x then y)");
        x0.assign(&m(0, 0), &m(0, 0) + N);
        y0.assign(&m(1, 0), &m(1, 0) + N);
    }

    OdeOptions opts;
    opts.dt_max = dt_max;
    OdeResult r = integrate(x0, y0, k, kappa, T, opts);

    const bool have_v = k.reversible && k.has_pi();
    std::ostringstream out;
    out << "# fwalk-ode v1\n";
    out << "# lambda2: " << detail::format_double(f.lambda2);
    if (f.degenerate) out << " (degenerate)";
    out << "\n";
    out << "# dt: " << detail::format_double(r.dt) << "\n";
    if (r.frozen()) out << "# frozen_at: " << detail::format_double(r.frozen_at) << "\n";
    out << "# max_mass_drift: " << detail::format_double(r.max_mass_drift) << "\n";
    out << "t,RQ,CS_v2,V,Lambda\n";
    PiInnerProduct ip{k.pi};
    for (std::size_t s = 0; s < r.ts.size(); ++s) {
        Vec z(N);
        for (int i = 0; i < N; ++i) z[i] = r.xs[s][i] - r.ys[s][i];
        double rq = std::numeric_limits<double>::quiet_NaN();
        double cs = 0.0;
        double v = std::numeric_limits<double>::quiet_NaN();
        if (norm2(z) >= 1e-14) {
            rq = rayleigh_quotient(z, k);
            cs = cosine_similarity(z, f.v2, k);
            if (have_v) {
                Vec zt = z;
                double nz = ip.norm(zt);
                for (double& e2 : zt) e2 /= nz;
                v = lyapunov_V(zt, k);
            }
        }
        double lam = lambda_t(r.xs[s], r.ys[s], kappa);
        out << detail::format_double(r.ts[s]) << ',' << detail::format_double(rq) << ','
            << detail::format_double(cs) << ',' << detail::format_double(v) << ','
            << detail::format_double(lam) << "\n";
    }
    emit(out_path, out.str());
    return 0;
}

int cmd_experiment(const std::string& config_path, const std::string& out_path, int jobs,
                   std::optional<std::uint64_t> seed_override,
                   std::optional<int> index_base_override, bool want_schedule) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (seed_override) cfg.master_seed = *seed_override;
    if (index_base_override) cfg.index_base = *index_base_override;
    if (want_schedule && cfg.schedule.empty())
        throw ValidationError("'dynamic' needs a config with a removal schedule (use 'simulate' otherwise)");
    if (!want_schedule && !cfg.schedule.empty())
        throw ValidationError("'simulate' is for static graphs; use 'dynamic' for schedules");
    MetricSeries m = run_experiment(cfg, jobs);
    emit(out_path, to_csv(m));
    return 0;
}

int cmd_compare(const std::string& config_path, const std::string& out_path,
                std::optional<std::uint64_t> seed_override) {
    std::ifstream in(config_path);
    if (!in) throw ValidationError("cannot open config file '" + config_path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    CompareConfig cfg = parse_compare_config(ss.str());
    if (seed_override) cfg.master_seed = *seed_override;
    CompareReport rep = compare_sim_vs_ode(cfg);
    emit(out_path, to_csv(rep));
    return 0;
}

int cmd_bound(int n, int nodes, double kappa, double T, double eps, double M,
              const GraphInput& gi, int m_samples, const std::string& out_path) {
    double m_used = M;
    int samples_used = 0;
    if (!(M >= 0.0) || M == 0.0) {
        if (gi.graph_path.empty() && gi.kernel_json_path.empty())
            throw ValidationError("--M, or --graph/--kernel-json to estimate it, is required");
        auto [g, k] = resolve_kernel(gi);
        if (nodes == 0) nodes = k.n();
        LipschitzEstimate lip = estimate_lipschitz_M(k, kappa, m_samples);
        m_used = lip.value;
        samples_used = lip.samples;
    }
    if (nodes == 0) throw ValidationError("--nodes (or a graph to take it from) is required");
    DeviationBoundResult b = deviation_bound({n, nodes, kappa, T, eps, m_used});
    std::ostringstream out;
    out << "# fwalk-bound v1\n";
    out << "n,N,kappa,T,eps,M,M_samples,raw,probability\n";
    out << n << ',' << nodes << ',' << detail::format_double(kappa) << ','
        << detail::format_double(T) << ',' << detail::format_double(eps) << ','
        << detail::format_double(m_used) << ',' << samples_used << ','
        << detail::format_double(b.raw) << ',' << detail::format_double(b.probability) << "\n";
    emit(out_path, out.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"interacting-walker estimation of the Fiedler vector: spectral oracle, "
                 "mean-field flow, stochastic simulation, and experiment harness"};
    app.require_subcommand(1);

    // spectral
    GraphInput sp_gi;
    bool sp_partition = false;
    std::string sp_out;
    CLI::App* sp = app.add_subcommand("spectral", "eigenvalues and Fiedler vector (CSV: index,eigenvalue,fiedler_v2[,in_S])");
    add_graph_flags(sp, sp_gi, true);
    sp->add_flag("--partition", sp_partition, "append the sign partition and its RCut");
    sp->add_option("--out", sp_out, "output CSV path (default stdout)");

    // ode
    GraphInput od_gi;
    double od_kappa = 0.0, od_T = 0.0, od_dt_max = std::numeric_limits<double>::infinity();
    std::string od_init = "random", od_out;
    std::uint64_t od_seed = 0;
    CLI::App* od = app.add_subcommand("ode", "integrate the mean-field flow (CSV: t,RQ,CS_v2,V,Lambda)");
    add_graph_flags(od, od_gi, true);
    od->add_option("--kappa", od_kappa, "kill-rate scale")->required();
    od->add_option("--T", od_T, "time horizon")->required();
    od->add_option("--dt-max", od_dt_max, "cap on the integrator step");
    od->add_option("--init", od_init,
                   "'random' or a file with two rows of N numbers (x then y)");
    od->add_option("--seed", od_seed, "seed for the random initial direction");
    od->add_option("--out", od_out, "output CSV path (default stdout)");

    // simulate / dynamic
    std::string si_config, si_out;
    int si_jobs = 1;
    std::uint64_t si_seed = 0;
    int si_index_base = 0;
    CLI::App* si = app.add_subcommand("simulate", "multi-run walker experiment on a static graph");
    si->add_option("--config", si_config, "experiment config JSON")->required();
    si->add_option("--out", si_out, "output CSV path (default stdout)");
    si->add_option("--jobs", si_jobs, "worker thread cap")->check(CLI::PositiveNumber);
    CLI::Option* si_seed_opt = si->add_option("--seed", si_seed, "override master_seed");
    CLI::Option* si_ib_opt =
        si->add_option("--index-base", si_index_base, "override the config's index base")
            ->check(CLI::IsMember({0, 1}));

    std::string dy_config, dy_out;
    int dy_jobs = 1;
    std::uint64_t dy_seed = 0;
    int dy_index_base = 0;
    CLI::App* dy = app.add_subcommand("dynamic", "walker experiment with a node-removal schedule");
    dy->add_option("--config", dy_config, "experiment config JSON (must contain a schedule)")->required();
    dy->add_option("--out", dy_out, "output CSV path (default stdout)");
    dy->add_option("--jobs", dy_jobs, "worker thread cap")->check(CLI::PositiveNumber);
    CLI::Option* dy_seed_opt = dy->add_option("--seed", dy_seed, "override master_seed");
    CLI::Option* dy_ib_opt =
        dy->add_option("--index-base", dy_index_base, "override the config's index base")
            ->check(CLI::IsMember({0, 1}));

    // compare
    std::string cp_config, cp_out;
    std::uint64_t cp_seed = 0;
    CLI::App* cp = app.add_subcommand("compare", "jump process vs flow: sup deviation over an n sweep");
    cp->add_option("--config", cp_config, "comparison config JSON")->required();
    cp->add_option("--out", cp_out, "output CSV path (default stdout)");
    CLI::Option* cp_seed_opt = cp->add_option("--seed", cp_seed, "override master_seed");

    // bound
    GraphInput bd_gi;
    int bd_n = 0, bd_nodes = 0, bd_samples = 200;
    double bd_kappa = 0.0, bd_T = 0.0, bd_eps = 0.0, bd_M = 0.0;
    std::string bd_out;
    CLI::App* bd = app.add_subcommand("bound", "deviation probability bound for given n, N, kappa, T, eps, M");
    bd->add_option("--n", bd_n, "walkers per group")->required()->check(CLI::PositiveNumber);
    bd->add_option("--nodes", bd_nodes, "node count N (defaults to the graph's)");
    bd->add_option("--kappa", bd_kappa, "kill-rate scale")->required();
    bd->add_option("--T", bd_T, "time horizon")->required();
    bd->add_option("--eps", bd_eps, "deviation radius")->required();
    bd->add_option("--M", bd_M, "Lipschitz constant of the drift (estimated from the graph when 0)");
    add_graph_flags(bd, bd_gi, true);
    bd->add_option("--samples", bd_samples, "sample count for the M estimate")->check(CLI::PositiveNumber);
    bd->add_option("--out", bd_out, "output CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sp->parsed()) return cmd_spectral(sp_gi, sp_partition, sp_out);
        if (od->parsed())
            return cmd_ode(od_gi, od_kappa, od_T, od_dt_max, od_init, od_seed, od_out);
        if (si->parsed())
            return cmd_experiment(si_config, si_out, si_jobs,
                                  si_seed_opt->count() ? std::optional<std::uint64_t>(si_seed)
                                                       : std::nullopt,
                                  si_ib_opt->count() ? std::optional<int>(si_index_base)
                                                     : std::nullopt,
                                  false);
        if (dy->parsed())
            return cmd_experiment(dy_config, dy_out, dy_jobs,
                                  dy_seed_opt->count() ? std::optional<std::uint64_t>(dy_seed)
                                                       : std::nullopt,
                                  dy_ib_opt->count() ? std::optional<int>(dy_index_base)
                                                     : std::nullopt,
                                  true);
        if (cp->parsed())
            return cmd_compare(cp_config, cp_out,
                               cp_seed_opt->count() ? std::optional<std::uint64_t>(cp_seed)
                                                    : std::nullopt);
        if (bd->parsed())
            return cmd_bound(bd_n, bd_nodes, bd_kappa, bd_T, bd_eps, bd_M, bd_gi, bd_samples,
                             bd_out);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 3;
    }
}
