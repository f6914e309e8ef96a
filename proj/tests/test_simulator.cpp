#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "fwalk/harness.hpp"
#include "fwalk/simulator.hpp"

using namespace fwalk;

namespace {

// Asymptotic Kolmogorov distribution: p = 2 sum (-1)^{k-1} exp(-2 k^2 m d^2).
double ks_pvalue(double d, std::size_t m) {
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * static_cast<double>(m) * d * d);
        s += (k % 2 ? term : -term);
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

double ks_stat_exponential(std::vector<double> samples, double rate) {
    std::sort(samples.begin(), samples.end());
    const std::size_t m = samples.size();
    double d = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double f = 1.0 - std::exp(-rate * samples[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i + 1) / m));
        d = std::max(d, std::abs(f - static_cast<double>(i) / m));
    }
    return d;
}

// One degree of freedom: p = erfc(sqrt(chi2 / 2)).
double chi2_pvalue_1dof(double chi2) { return std::erfc(std::sqrt(chi2 / 2.0)); }

WalkerState make_state(const Graph& g, std::vector<int> X, std::vector<int> Y, double kappa) {
    WalkerState s;
    s.X = std::move(X);
    s.Y = std::move(Y);
    s.n = 0;
    for (int c : s.X) s.n += c;
    s.kappa = kappa;
    s.clock = 0.0;
    (void)g;
    return s;
}

Trajectory run_static(const Graph& g, const Kernel& k, int n, double kappa, double T,
                      std::uint64_t seed, const std::vector<double>& grid,
                      const RunOptions& opts = {}) {
    std::vector<Epoch> epochs(1);
    epochs[0].graph = g;
    epochs[0].kernel = k;
    return run_epochs(epochs, n, kappa, T, Rng(seed), grid, opts);
}

}  // namespace

TEST_CASE("waiting times from a frozen state are exponential at the total rate") {
    Graph g = path_graph(3);
    Kernel k = combinatorial_kernel(g);
    WalkerState st = make_state(g, {2, 1, 0}, {0, 1, 2}, 3.0);
    Simulation sim(g, k, st);

    // rates by hand: exit rates (1, 2, 1); walk_x = 2*1 + 1*2 = 4,
    // walk_y = 1*2 + 2*1 = 4; pairs = 0*2? no: X.Y per node = (0, 1, 0),
    // kill = 2 * (3/3) * 1 = 2; total 10
    REQUIRE(sim.total_rate() == Catch::Approx(10.0).epsilon(1e-12));

    Rng rng(12345);
    std::vector<double> samples(20000);
    for (double& s : samples) s = sim.draw_waiting_time(rng);
    double d = ks_stat_exponential(std::move(samples), 10.0);
    REQUIRE(ks_pvalue(d, 20000) > 0.001);
}

TEST_CASE("event kind frequencies follow the rate split") {
    Graph g = path_graph(2);
    Kernel k = combinatorial_kernel(g);
    WalkerState st = make_state(g, {2, 1}, {1, 2}, 3.0);
    Simulation base(g, k, st);
    // walk totals 3 + 3, kill = 2*(3/3)*(2+2) = 8, total 14
    REQUIRE(base.total_rate() == Catch::Approx(14.0).epsilon(1e-12));

    Rng rng(777);
    const int reps = 20000;
    int walks = 0;
    for (int i = 0; i < reps; ++i) {
        Simulation s = base;
        SimEvent ev = s.apply_next_event(0.001, rng);
        if (ev.kind == EventKind::walk) ++walks;
    }
    double p_walk = 6.0 / 14.0;
    double expected = reps * p_walk;
    double var = reps * p_walk * (1.0 - p_walk);
    double chi2 = (walks - expected) * (walks - expected) / var;
    REQUIRE(chi2_pvalue_1dof(chi2) > 0.001);
}

TEST_CASE("walk destinations follow the kernel rates") {
    // weighted path: rate(1 -> 0) = 3, rate(1 -> 2) = 1
    Graph g = parse_edge_list("0 1 3\n1 2 1\n");
    Kernel k = combinatorial_kernel(g);
    WalkerState st = make_state(g, {0, 5, 0}, {0, 0, 0}, 1.0);
    st.n = 5;
    Simulation base(g, k, st);

    Rng rng(4242);
    const int reps = 20000;
    int to0 = 0, total = 0;
    for (int i = 0; i < reps; ++i) {
        Simulation s = base;
        SimEvent ev = s.apply_next_event(0.001, rng);
        REQUIRE(ev.kind == EventKind::walk);
        REQUIRE(ev.from == 1);
        ++total;
        if (ev.to == 0) ++to0;
    }
    double p = 0.75;
    double chi2 = (to0 - total * p) * (to0 - total * p) / (total * p * (1 - p));
    REQUIRE(chi2_pvalue_1dof(chi2) > 0.001);
}

TEST_CASE("kill victims leave a node with both groups present") {
    Graph g = path_graph(2);
    Kernel k = combinatorial_kernel(g);
    // only node 0 has overlap
    WalkerState st = make_state(g, {3, 0}, {2, 1}, 50.0);
    Simulation base(g, k, st);
    Rng rng(31);
    int kills = 0;
    for (int i = 0; i < 5000 && kills < 500; ++i) {
        Simulation s = base;
        SimEvent ev = s.apply_next_event(0.001, rng);
        if (ev.kind != EventKind::kill_relocate) continue;
        ++kills;
        REQUIRE(ev.from == 0);
    }
    REQUIRE(kills == 500);
}

TEST_CASE("conservation holds through a long fuzz run") {
    Rng grng(2718);
    Graph g = random_connected_gnm(10, 18, grng);
    Kernel k = combinatorial_kernel(g);
    RunOptions opts;
    opts.paranoid_checks = true;  // conservation recheck after every event
    std::vector<double> grid = {600.0};
    Trajectory traj = run_static(g, k, 25, 20.0, 600.0, 99, grid, opts);
    REQUIRE(traj.event_count > 30000);
    long long sx = 0, sy = 0;
    for (int c : traj.X_end) sx += c;
    for (int c : traj.Y_end) sy += c;
    REQUIRE(sx == 25);
    REQUIRE(sy == 25);
}

TEST_CASE("fixed seeds give byte-identical trajectories") {
    Graph g = cycle_graph(5);
    Kernel k = combinatorial_kernel(g);
    RunOptions opts;
    opts.record_events = true;
    std::vector<double> grid = {0.5, 1.0, 1.5, 2.0};
    Trajectory a = run_static(g, k, 12, 8.0, 2.0, 31415, grid, opts);
    Trajectory b = run_static(g, k, 12, 8.0, 2.0, 31415, grid, opts);
    REQUIRE(events_to_csv(a) == events_to_csv(b));
    REQUIRE(a.X_end == b.X_end);
    REQUIRE(a.Y_end == b.Y_end);
    for (std::size_t s = 0; s < a.snapshots.size(); ++s) {
        REQUIRE(a.snapshots[s].x_avg == b.snapshots[s].x_avg);
        REQUIRE(a.snapshots[s].y_inst == b.snapshots[s].y_inst);
    }
    Trajectory c = run_static(g, k, 12, 8.0, 2.0, 27182, grid, opts);
    REQUIRE(events_to_csv(a) != events_to_csv(c));
}

TEST_CASE("snapshot grid handling") {
    Graph g = path_graph(3);
    Kernel k = combinatorial_kernel(g);
    SECTION("every grid time including T gets a snapshot") {
        std::vector<double> grid = {0.5, 1.0, 2.0};
        Trajectory traj = run_static(g, k, 10, 5.0, 2.0, 7, grid);
        REQUIRE(traj.snapshots.size() == 3);
        REQUIRE(traj.snapshots.back().t == 2.0);
    }
    SECTION("a grid time of zero reports the initial state") {
        std::vector<double> grid = {0.0, 1.0};
        Trajectory traj = run_static(g, k, 10, 5.0, 2.0, 7, grid);
        REQUIRE(traj.snapshots[0].t == 0.0);
        REQUIRE(traj.snapshots[0].x_avg == traj.snapshots[0].x_inst);
    }
    SECTION("grid times beyond the horizon are rejected") {
        REQUIRE_THROWS_AS(run_static(g, k, 10, 5.0, 2.0, 7, {3.0}), ValidationError);
    }
}

TEST_CASE("event budget stops the run early") {
    Graph g = cycle_graph(4);
    Kernel k = combinatorial_kernel(g);
    RunOptions opts;
    opts.max_events = 100;
    Trajectory traj = run_static(g, k, 10, 5.0, 1000.0, 5, {}, opts);
    REQUIRE(traj.event_count == 100);
    REQUIRE(traj.t_end < 1000.0);
}

TEST_CASE("initialization") {
    Graph g = path_graph(3);
    Rng rng(1);
    SECTION("uniform init conserves counts") {
        WalkerState s = init_state(g, 17, 2.0, UniformInit{}, rng);
        long long sx = 0, sy = 0;
        for (int c : s.X) sx += c;
        for (int c : s.Y) sy += c;
        REQUIRE(sx == 17);
        REQUIRE(sy == 17);
    }
    SECTION("explicit init is validated") {
        ExplicitInit bad1;
        bad1.X = {5, 5, 5};
        bad1.Y = {5, 5, 4};  // Y sums to 14 != 15
        REQUIRE_THROWS_AS(init_state(g, 15, 2.0, bad1, rng), ValidationError);
        ExplicitInit bad2;
        bad2.X = {16, -1, 0};
        bad2.Y = {15, 0, 0};
        REQUIRE_THROWS_AS(init_state(g, 15, 2.0, bad2, rng), ValidationError);
        ExplicitInit bad3;
        bad3.X = {15, 0};
        bad3.Y = {15, 0};
        REQUIRE_THROWS_AS(init_state(g, 15, 2.0, bad3, rng), ValidationError);
    }
    SECTION("parameter validation") {
        REQUIRE_THROWS_AS(init_state(g, 0, 2.0, UniformInit{}, rng), ValidationError);
        REQUIRE_THROWS_AS(init_state(g, 5, 0.0, UniformInit{}, rng), ValidationError);
        Graph disc = parse_edge_list("0 1\n2 3\n");
        REQUIRE_THROWS_AS(init_state(disc, 5, 1.0, UniformInit{}, rng), ValidationError);
    }
}

TEST_CASE("estimator from recorded events matches a manual replay") {
    Graph g = path_graph(3);
    Kernel k = combinatorial_kernel(g);
    RunOptions opts;
    opts.record_events = true;
    std::vector<double> grid = {1.0, 2.0};
    const int n = 8;
    Trajectory traj = run_static(g, k, n, 4.0, 2.0, 321, grid, opts);

    SECTION("snapshot times use the stored averages") {
        Vec zh = estimator_z_hat(traj, 1.0);
        const SimSnapshot& s = traj.snapshots[0];
        for (int i = 0; i < 3; ++i)
            REQUIRE(zh[i] == Catch::Approx(s.x_avg[i] - s.y_avg[i]).margin(1e-14));
    }
    SECTION("interior times replay the event stream") {
        const double t = 0.7;
        // manual piecewise-constant integral of X - Y from the event log
        std::vector<int> X = traj.X0, Y = traj.Y0;
        Vec ix(3, 0.0), iy(3, 0.0);
        double prev = 0.0;
        for (const SimEvent& e : traj.events) {
            double seg = std::min(e.t, t) - prev;
            if (seg < 0.0) break;
            for (int i = 0; i < 3; ++i) {
                ix[i] += X[i] * seg;
                iy[i] += Y[i] * seg;
            }
            if (e.t > t) {
                prev = t;
                break;
            }
            auto& grp = (e.type == WalkerType::x) ? X : Y;
            grp[e.from] -= 1;
            grp[e.to] += 1;
            prev = e.t;
        }
        if (prev < t)
            for (int i = 0; i < 3; ++i) {
                ix[i] += X[i] * (t - prev);
                iy[i] += Y[i] * (t - prev);
            }
        Vec zh = estimator_z_hat(traj, t);
        for (int i = 0; i < 3; ++i)
            REQUIRE(zh[i] == Catch::Approx((ix[i] - iy[i]) / (n * t)).margin(1e-12));
    }
    SECTION("final time works without events via the closing integrals") {
        RunOptions bare;
        Trajectory t2 = run_static(g, k, n, 4.0, 2.0, 321, grid, bare);
        Vec zh = estimator_z_hat(t2, t2.t_end);
        Vec zh_ref = estimator_z_hat(traj, traj.t_end);
        for (int i = 0; i < 3; ++i) REQUIRE(zh[i] == Catch::Approx(zh_ref[i]).margin(1e-12));
    }
    SECTION("unreachable times are an error") {
        RunOptions bare;
        Trajectory t2 = run_static(g, k, n, 4.0, 2.0, 321, grid, bare);
        REQUIRE_THROWS_AS(estimator_z_hat(t2, 0.7), ValidationError);
    }
}

TEST_CASE("node removal mid-run") {
    Graph c6 = cycle_graph(6);
    Kernel k6 = combinatorial_kernel(c6);
    Graph p5 = remove_nodes(c6, {2});
    Kernel k5 = combinatorial_kernel(p5);
    std::vector<Epoch> epochs(2);
    epochs[0].graph = c6;
    epochs[0].kernel = k6;
    epochs[1].t_start = 1.0;
    epochs[1].removed = {2};
    epochs[1].graph = p5;
    epochs[1].kernel = k5;

    std::vector<double> grid = {0.5, 1.5, 2.0};
    Trajectory traj = run_epochs(epochs, 20, 10.0, 2.0, Rng(55), grid, {});

    SECTION("snapshots carry the epoch and its dimension") {
        REQUIRE(traj.snapshots[0].epoch == 0);
        REQUIRE(traj.snapshots[0].x_inst.size() == 6);
        REQUIRE(traj.snapshots[1].epoch == 1);
        REQUIRE(traj.snapshots[1].x_inst.size() == 5);
        REQUIRE(traj.final_epoch == 1);
    }
    SECTION("conservation survives the removal") {
        long long sx = 0, sy = 0;
        for (int c : traj.X_end) sx += c;
        for (int c : traj.Y_end) sy += c;
        REQUIRE(sx == 20);
        REQUIRE(sy == 20);
        REQUIRE(traj.X_end.size() == 5);
    }
    SECTION("epochs past the horizon never trigger") {
        std::vector<Epoch> late = epochs;
        late[1].t_start = 3.0;
        Trajectory t2 = run_epochs(late, 20, 10.0, 2.0, Rng(1), {2.0}, {});
        REQUIRE(t2.final_epoch == 0);
        REQUIRE(t2.X_end.size() == 6);
    }
    SECTION("disconnecting removal is rejected") {
        std::vector<Epoch> bad = epochs;
        bad[1].graph = parse_edge_list("0 1\n2 3\n3 4\n");
        REQUIRE_THROWS_AS(run_epochs(bad, 20, 10.0, 2.0, Rng(1), grid, {}), ValidationError);
    }
}

TEST_CASE("relocation after removal") {
    Graph st = star_graph(4);
    Kernel k = combinatorial_kernel(st);
    Graph rem = remove_nodes(st, {1});
    Kernel krem = combinatorial_kernel(rem);

    SECTION("whole displaced group falls back to uniform and flags it") {
        // every x walker sits on the node being removed
        ExplicitInit init;
        init.X = {0, 6, 0, 0, 0};
        init.Y = {6, 0, 0, 0, 0};
        RunOptions opts;
        opts.init = init;
        // tiny horizon, tiny kappa: no event fires before the removal
        std::vector<Epoch> epochs(2);
        epochs[0].graph = st;
        epochs[0].kernel = k;
        epochs[1].t_start = 1e-9;
        epochs[1].removed = {1};
        epochs[1].graph = rem;
        epochs[1].kernel = krem;
        Trajectory traj = run_epochs(epochs, 6, 1e-9, 2e-9, Rng(3), {}, opts);
        REQUIRE(traj.relocation_fallback_used);
        long long sx = 0;
        for (int c : traj.X_end) sx += c;
        REQUIRE(sx == 6);
    }
    SECTION("survivor-anchored relocation keeps walkers on surviving nodes") {
        ExplicitInit init;
        init.X = {2, 2, 2, 0, 0};
        init.Y = {2, 2, 2, 0, 0};
        RunOptions opts;
        opts.init = init;
        std::vector<Epoch> epochs(2);
        epochs[0].graph = st;
        epochs[0].kernel = k;
        epochs[1].t_start = 1e-9;
        epochs[1].removed = {1};
        epochs[1].graph = rem;
        epochs[1].kernel = krem;
        Trajectory traj = run_epochs(epochs, 6, 1e-9, 2e-9, Rng(3), {}, opts);
        REQUIRE_FALSE(traj.relocation_fallback_used);
        REQUIRE(traj.X_end.size() == 4);
        long long sx = 0, sy = 0;
        for (int c : traj.X_end) sx += c;
        for (int c : traj.Y_end) sy += c;
        REQUIRE(sx == 6);
        REQUIRE(sy == 6);
    }
}

TEST_CASE("membership statistics of the estimator path") {
    Graph g = path_graph(3);
    Kernel k = combinatorial_kernel(g);
    RunOptions opts;
    opts.record_events = true;
    Trajectory traj = run_static(g, k, 20, 50.0, 10.0, 246, {10.0}, opts);
    Vec center = {1.0 / std::sqrt(2.0), 0.0, -1.0 / std::sqrt(2.0)};

    SECTION("occupation fraction is a probability and grows with the window start") {
        double f_all = occupation_fraction(traj, center, 0.3, 0.0, 10.0);
        double f_late = occupation_fraction(traj, center, 0.3, 5.0, 10.0);
        REQUIRE(f_all >= 0.0);
        REQUIRE(f_all <= 1.0);
        REQUIRE(f_late >= f_all - 1e-12);  // converged tail spends more time inside
    }
    SECTION("window validation") {
        REQUIRE_THROWS_AS(occupation_fraction(traj, center, 0.3, 5.0, 5.0), ValidationError);
        REQUIRE_THROWS_AS(occupation_fraction(traj, center, 0.3, -1.0, 5.0), ValidationError);
    }
    SECTION("exit time after first entry") {
        auto et = exit_time(traj, center, 0.3);
        if (et) {
            REQUIRE(*et > 0.0);
            REQUIRE(*et <= 10.0);
        }
    }
}

TEST_CASE("rng streams are distinct and reproducible") {
    Rng a = Rng::stream(42, 0);
    Rng b = Rng::stream(42, 1);
    Rng a2 = Rng::stream(42, 0);
    bool same_as_b = true, same_as_a2 = true;
    for (int i = 0; i < 16; ++i) {
        std::uint64_t va = a.next();
        if (va != b.next()) same_as_b = false;
        if (va != a2.next()) same_as_a2 = false;
    }
    REQUIRE_FALSE(same_as_b);
    REQUIRE(same_as_a2);
}
