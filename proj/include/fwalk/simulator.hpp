#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fwalk/core.hpp"
#include "fwalk/graph.hpp"
#include "fwalk/kernel.hpp"
#include "fwalk/rng.hpp"

namespace fwalk {

// Counts per node for the two walker groups. Densities X/n, Y/n live on the
// simplex; sum(X) = sum(Y) = n is invariant under every event.
struct WalkerState {
    std::vector<int> X, Y;
    int n = 0;
    double kappa = 0.0;
    double clock = 0.0;
};

enum class EventKind : std::uint8_t { walk = 0, kill_relocate = 1 };
enum class WalkerType : std::uint8_t { x = 0, y = 1 };

struct SimEvent {
    double t;
    EventKind kind;
    WalkerType type;
    int from;
    int to;  // == from encodes a no-op relocation
};

struct SimSnapshot {
    double t;
    int epoch;
    Vec x_inst, y_inst;  // instantaneous densities
    Vec x_avg, y_avg;    // running time averages (x_inst at t = 0)
};

// One topology regime of a dynamic run. removed is expressed in the
// previous epoch's indexing; the first epoch has t_start = 0 and no
// removals.
struct Epoch {
    double t_start = 0.0;
    NodeSet removed;
    Graph graph;
    Kernel kernel;
};

struct Trajectory {
    int n = 0;
    double kappa = 0.0;
    double horizon = 0.0;
    std::vector<int> X0, Y0;
    std::vector<SimSnapshot> snapshots;
    std::vector<SimEvent> events;  // populated when record_events was set
    bool events_recorded = false;
    Vec integral_X, integral_Y;  // int_0^t_end of counts, final epoch indexing
    std::vector<int> X_end, Y_end;
    double t_end = 0.0;
    std::uint64_t event_count = 0;
    int final_epoch = 0;
    bool relocation_fallback_used = false;
};

struct UniformInit {};
struct ExplicitInit {
    std::vector<int> X, Y;
};
using InitSpec = std::variant<UniformInit, ExplicitInit>;

inline WalkerState init_state(const Graph& g, int n, double kappa, const InitSpec& init, Rng& rng) {
    if (n < 1) throw ValidationError("init_state: n >= 1 required");
    if (!(kappa > 0.0)) throw ValidationError("init_state: kappa > 0 required");
    if (!is_connected(g)) throw ValidationError("init_state: graph must be connected");
    WalkerState s;
    s.n = n;
    s.kappa = kappa;
    s.clock = 0.0;
    if (std::holds_alternative<UniformInit>(init)) {
        s.X.assign(g.n, 0);
        s.Y.assign(g.n, 0);
        for (int w = 0; w < n; ++w) ++s.X[rng.below(g.n)];
        for (int w = 0; w < n; ++w) ++s.Y[rng.below(g.n)];
    } else {
        const auto& e = std::get<ExplicitInit>(init);
        if (static_cast<int>(e.X.size()) != g.n || static_cast<int>(e.Y.size()) != g.n)
            throw ValidationError("init_state: explicit counts must match node count");
        long long sx = 0, sy = 0;
        for (int c : e.X) {
            if (c < 0) throw ValidationError("init_state: negative count");
            sx += c;
        }
        for (int c : e.Y) {
            if (c < 0) throw ValidationError("init_state: negative count");
            sy += c;
        }
        if (sx != n || sy != n) throw ValidationError("init_state: explicit counts must sum to n");
        s.X = e.X;
        s.Y = e.Y;
    }
    return s;
}

// Exact Gillespie engine for one topology epoch. Rates live in incremental
// tables: walk_x[j] = (-Q_jj) X_j, walk_y[j] likewise, and integer pair
// counts X_j Y_j for the kill channel (total kill rate 2 (kappa/n) sum_j
// X_j Y_j, both victim types at equal rate). Only entries of the source and
// destination nodes change per event.
class Simulation {
  public:
    Simulation(const Graph& g, const Kernel& k, WalkerState s)
        : g_(&g), k_(&k), s_(std::move(s)) {
        if (k.n() != g.n) throw ValidationError("Simulation: kernel/graph size mismatch");
        if (static_cast<int>(s_.X.size()) != g.n) throw ValidationError("Simulation: state size mismatch");
        build_neighbor_tables();
        rebuild_rates();
        last_flush_x_.assign(g.n, s_.clock);
        last_flush_y_.assign(g.n, s_.clock);
        integral_X_.assign(g.n, 0.0);
        integral_Y_.assign(g.n, 0.0);
    }

    const WalkerState& state() const { return s_; }
    const Vec& integral_X() const { return integral_X_; }
    const Vec& integral_Y() const { return integral_Y_; }

    double total_rate() const {
        return walk_x_total_ + walk_y_total_ +
               2.0 * (s_.kappa / s_.n) * static_cast<double>(pairs_total_);
    }

    // Exponential waiting time at the current state; consumes one draw.
    double draw_waiting_time(Rng& rng) {
        double r = total_rate();
        if (!(r > 0.0)) throw NumericError("Simulation: total rate vanished on a connected graph");
        return rng.exponential(r);
    }

    // Advance the clock with no event (horizon or grid boundary). Exact by
    // memorylessness: the residual waiting time past t is Exponential again.
    void advance_clock(double t) {
        if (t < s_.clock) throw ValidationError("Simulation: clock must not go backwards");
        s_.clock = t;
    }

    // Sample and apply one event at time s_.clock + dt (caller supplies dt
    // from draw_waiting_time). Returns the applied event.
    SimEvent apply_next_event(double dt, Rng& rng) {
        const double t_event = s_.clock + dt;
        const double kill_total = 2.0 * (s_.kappa / s_.n) * static_cast<double>(pairs_total_);
        const double r = rng.uniform01() * (walk_x_total_ + walk_y_total_ + kill_total);
        SimEvent ev;
        ev.t = t_event;
        if (r < walk_x_total_) {
            ev = sample_walk(WalkerType::x, r, t_event);
        } else if (r < walk_x_total_ + walk_y_total_ || pairs_total_ == 0) {
            // the second clause absorbs a roundoff landing past the walk
            // region while the kill channel is empty
            ev = sample_walk(WalkerType::y, std::min(r - walk_x_total_, walk_y_total_), t_event);
        } else {
            ev = sample_kill(rng, t_event);
        }
        apply_move(ev);
        s_.clock = t_event;
        ++events_applied_;
        if (events_applied_ % RESYNC_INTERVAL == 0) resync_rates();
        return ev;
    }

    // Flush the lazy integrals of every node up to the current clock.
    void flush_integrals() {
        for (int i = 0; i < g_->n; ++i) {
            integral_X_[i] += s_.X[i] * (s_.clock - last_flush_x_[i]);
            integral_Y_[i] += s_.Y[i] * (s_.clock - last_flush_y_[i]);
            last_flush_x_[i] = s_.clock;
            last_flush_y_[i] = s_.clock;
        }
    }

    // Recompute rate tables from counts and verify the incremental totals
    // have not drifted (1e-9 relative); the pair total is integer-exact.
    void resync_rates() {
        double wx = 0.0, wy = 0.0;
        long long pt = 0;
        for (int j = 0; j < g_->n; ++j) {
            wx += exit_rate_[j] * s_.X[j];
            wy += exit_rate_[j] * s_.Y[j];
            pt += static_cast<long long>(s_.X[j]) * s_.Y[j];
        }
        double tol = 1e-9 * std::max(1.0, std::max(wx, wy));
        if (std::abs(wx - walk_x_total_) > tol || std::abs(wy - walk_y_total_) > tol)
            throw NumericError("Simulation: walk-rate totals drifted beyond 1e-9");
        if (pt != pairs_total_) throw NumericError("Simulation: pair total drifted");
        walk_x_total_ = wx;
        walk_y_total_ = wy;
    }

    void check_conservation() const {
        long long sx = 0, sy = 0;
        for (int c : s_.X) sx += c;
        for (int c : s_.Y) sy += c;
        if (sx != s_.n || sy != s_.n) throw NumericError("Simulation: walker conservation violated");
    }

    // Carry integrals out (final epoch indexing).
    std::pair<Vec, Vec> take_integrals() {
        flush_integrals();
        return {integral_X_, integral_Y_};
    }

    void seed_integrals(Vec ix, Vec iy) {
        if (static_cast<int>(ix.size()) != g_->n || static_cast<int>(iy.size()) != g_->n)
            throw ValidationError("Simulation: carried integral size mismatch");
        integral_X_ = std::move(ix);
        integral_Y_ = std::move(iy);
    }

  private:
    static constexpr std::uint64_t RESYNC_INTERVAL = 1000000;

    void build_neighbor_tables() {
        const int N = g_->n;
        exit_rate_.assign(N, 0.0);
        nbr_.assign(N, {});
        nbr_cum_.assign(N, {});
        for (int j = 0; j < N; ++j) {
            exit_rate_[j] = k_->exit_rate(j);
            double cum = 0.0;
            for (int i = 0; i < N; ++i) {
                if (i == j) continue;
                double rate = k_->q(j, i);
                if (rate > 0.0) {
                    cum += rate;
                    nbr_[j].push_back(i);
                    nbr_cum_[j].push_back(cum);
                }
            }
        }
    }

    void rebuild_rates() {
        const int N = g_->n;
        walk_x_total_ = walk_y_total_ = 0.0;
        pairs_total_ = 0;
        pairs_.assign(N, 0);
        dirty_.clear();
        in_dirty_.assign(N, 0);
        for (int j = 0; j < N; ++j) {
            walk_x_total_ += exit_rate_[j] * s_.X[j];
            walk_y_total_ += exit_rate_[j] * s_.Y[j];
            pairs_[j] = static_cast<long long>(s_.X[j]) * s_.Y[j];
            pairs_total_ += pairs_[j];
            if (pairs_[j] > 0) mark_dirty(j);
        }
    }

    void mark_dirty(int j) {
        if (!in_dirty_[j]) {
            in_dirty_[j] = 1;
            dirty_.push_back(j);
        }
    }

    SimEvent sample_walk(WalkerType type, double r, double t_event) {
        const std::vector<int>& C = (type == WalkerType::x) ? s_.X : s_.Y;
        int j = -1;
        double cum = 0.0;
        for (int v = 0; v < g_->n; ++v) {
            cum += exit_rate_[v] * C[v];
            if (r < cum) {
                j = v;
                break;
            }
        }
        if (j < 0) {  // roundoff tail: last node with walkers and positive rate
            for (int v = g_->n - 1; v >= 0; --v)
                if (C[v] > 0 && exit_rate_[v] > 0.0) {
                    j = v;
                    break;
                }
        }
        // destination by cumulative neighbor weight; the residual of r inside
        // node j is uniform on [0, exit_rate * C_j) and independent
        double u = cum - r;  // uniform on (0, exit_rate_[j]*C[j]]
        double target = exit_rate_[j] * C[j] - u;
        double per_walker = target / C[j];
        const auto& cw = nbr_cum_[j];
        std::size_t lo = 0, hi = cw.size();
        while (lo < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (cw[mid] <= per_walker)
                lo = mid + 1;
            else
                hi = mid;
        }
        if (lo >= cw.size()) lo = cw.size() - 1;
        return SimEvent{t_event, EventKind::walk, type, j, nbr_[j][lo]};
    }

    SimEvent sample_kill(Rng& rng, double t_event) {
        long long m = static_cast<long long>(rng.below(static_cast<std::uint64_t>(pairs_total_)));
        int j = -1;
        std::size_t w = 0;
        while (w < dirty_.size()) {
            int v = dirty_[w];
            if (pairs_[v] == 0) {  // compact stale entries
                in_dirty_[v] = 0;
                dirty_[w] = dirty_.back();
                dirty_.pop_back();
                continue;
            }
            if (m < pairs_[v]) {
                j = v;
                break;
            }
            m -= pairs_[v];
            ++w;
        }
        if (j < 0) throw NumericError("Simulation: kill selection ran past the dirty set");
        WalkerType victim = (rng.next() & 1ull) ? WalkerType::y : WalkerType::x;
        const std::vector<int>& C = (victim == WalkerType::x) ? s_.X : s_.Y;
        long long pick = static_cast<long long>(rng.below(static_cast<std::uint64_t>(s_.n)));
        int dest = -1;
        for (int v = 0; v < g_->n; ++v) {
            pick -= C[v];
            if (pick < 0) {
                dest = v;
                break;
            }
        }
        if (dest < 0) throw NumericError("Simulation: relocation selection overran counts");
        return SimEvent{t_event, EventKind::kill_relocate, victim, j, dest};
    }

    void touch_x(int v, double t_event) {
        integral_X_[v] += s_.X[v] * (t_event - last_flush_x_[v]);
        last_flush_x_[v] = t_event;
    }
    void touch_y(int v, double t_event) {
        integral_Y_[v] += s_.Y[v] * (t_event - last_flush_y_[v]);
        last_flush_y_[v] = t_event;
    }

    void apply_move(const SimEvent& ev) {
        const int j = ev.from, i = ev.to;
        std::vector<int>& C = (ev.type == WalkerType::x) ? s_.X : s_.Y;
        if (ev.type == WalkerType::x) {
            touch_x(j, ev.t);
            touch_x(i, ev.t);
        } else {
            touch_y(j, ev.t);
            touch_y(i, ev.t);
        }
        if (i != j) {
            --C[j];
            ++C[i];
            double d_j = exit_rate_[j], d_i = exit_rate_[i];
            if (ev.type == WalkerType::x) {
                walk_x_total_ += d_i - d_j;
            } else {
                walk_y_total_ += d_i - d_j;
            }
        }
        // pair counts at j and i change even for same-node kills of the
        // moved type only when counts changed; recompute the two entries
        for (int v : {j, i}) {
            long long p = static_cast<long long>(s_.X[v]) * s_.Y[v];
            pairs_total_ += p - pairs_[v];
            pairs_[v] = p;
            if (p > 0) mark_dirty(v);
        }
    }

    const Graph* g_;
    const Kernel* k_;
    WalkerState s_;

    Vec exit_rate_;
    std::vector<std::vector<int>> nbr_;
    std::vector<std::vector<double>> nbr_cum_;

    double walk_x_total_ = 0.0, walk_y_total_ = 0.0;
    long long pairs_total_ = 0;
    std::vector<long long> pairs_;
    std::vector<int> dirty_;
    std::vector<char> in_dirty_;

    Vec integral_X_, integral_Y_;
    Vec last_flush_x_, last_flush_y_;
    std::uint64_t events_applied_ = 0;
};

// Relocate walkers off removed nodes onto a uniformly chosen surviving
// same-type walker (sequentially, so earlier relocations are eligible
// targets), then reindex counts to g_new. When a whole group sits on
// removed nodes, fall back to uniform placement over surviving nodes and
// report it.
struct RemovalOutcome {
    WalkerState state;
    bool fallback_used = false;
};

inline RemovalOutcome apply_node_removal(const WalkerState& s, const NodeSet& removed,
                                         const Graph& g_new, Rng& rng) {
    const int old_n = static_cast<int>(s.X.size());
    std::vector<char> gone(old_n, 0);
    for (int v : removed) {
        if (v < 0 || v >= old_n) throw ValidationError("apply_node_removal: index out of range");
        gone[v] = 1;
    }
    std::vector<int> newid(old_n, -1);
    int kept = 0;
    for (int v = 0; v < old_n; ++v)
        if (!gone[v]) newid[v] = kept++;
    if (kept != g_new.n) throw ValidationError("apply_node_removal: g_new does not match removal set");

    RemovalOutcome out;
    out.state.n = s.n;
    out.state.kappa = s.kappa;
    out.state.clock = s.clock;

    auto relocate = [&](const std::vector<int>& old_counts) {
        std::vector<int> nc(kept, 0);
        long long survivors = 0;
        for (int v = 0; v < old_n; ++v)
            if (!gone[v]) {
                nc[newid[v]] = old_counts[v];
                survivors += old_counts[v];
            }
        long long displaced = s.n - survivors;
        if (displaced == 0) return nc;
        if (survivors == 0) {
            out.fallback_used = true;
            for (int w = 0; w < s.n; ++w) ++nc[rng.below(kept)];
            return nc;
        }
        for (int v = 0; v < old_n; ++v) {
            if (!gone[v]) continue;
            for (int w = 0; w < old_counts[v]; ++w) {
                long long pick = static_cast<long long>(rng.below(static_cast<std::uint64_t>(survivors)));
                int dest = -1;
                for (int u = 0; u < kept; ++u) {
                    pick -= nc[u];
                    if (pick < 0) {
                        dest = u;
                        break;
                    }
                }
                if (dest < 0) throw NumericError("apply_node_removal: relocation overran counts");
                ++nc[dest];
                ++survivors;
            }
        }
        return nc;
    };

    out.state.X = relocate(s.X);
    out.state.Y = relocate(s.Y);
    return out;
}

struct RunOptions {
    InitSpec init = UniformInit{};
    bool record_events = false;
    bool paranoid_checks = false;  // per-event conservation recheck
    std::uint64_t max_events = 0;  // 0 = unbounded
};

// Full event loop over a sequence of topology epochs. Waiting times drawn
// past a boundary (grid time, removal time, horizon) are discarded and the
// clock advanced to the boundary; by memorylessness this leaves the law of
// the process unchanged. Integrals carry across removals restricted to
// surviving nodes, so time averages keep their history through topology
// changes (the mass on removed nodes is forgotten).
inline Trajectory run_epochs(const std::vector<Epoch>& epochs, int n, double kappa, double T,
                             Rng rng, const std::vector<double>& sample_grid,
                             const RunOptions& opts = {}) {
    if (epochs.empty()) throw ValidationError("run_epochs: need at least one epoch");
    if (!(T > 0.0)) throw ValidationError("run_epochs: horizon must be positive");
    if (epochs[0].t_start != 0.0) throw ValidationError("run_epochs: first epoch must start at 0");
    for (std::size_t e = 1; e < epochs.size(); ++e) {
        if (!(epochs[e].t_start > epochs[e - 1].t_start))
            throw ValidationError("run_epochs: epoch times must increase");
        if (!is_connected(epochs[e].graph))
            throw ValidationError("run_epochs: scheduled removal disconnects the graph");
    }
    for (double t : sample_grid)
        if (t < 0.0 || t > T) throw ValidationError("run_epochs: sample time outside [0, T]");

    Trajectory traj;
    traj.n = n;
    traj.kappa = kappa;
    traj.horizon = T;
    traj.events_recorded = opts.record_events;

    WalkerState st = init_state(epochs[0].graph, n, kappa, opts.init, rng);
    traj.X0 = st.X;
    traj.Y0 = st.Y;

    std::size_t epoch_idx = 0;
    auto sim = std::make_unique<Simulation>(epochs[0].graph, epochs[0].kernel, std::move(st));

    std::size_t grid_pos = 0;
    auto snapshot = [&](double t) {
        sim->flush_integrals();
        const WalkerState& s = sim->state();
        const int N = static_cast<int>(s.X.size());
        SimSnapshot snap;
        snap.t = t;
        snap.epoch = static_cast<int>(epoch_idx);
        snap.x_inst.resize(N);
        snap.y_inst.resize(N);
        snap.x_avg.resize(N);
        snap.y_avg.resize(N);
        const Vec& ix = sim->integral_X();
        const Vec& iy = sim->integral_Y();
        for (int i = 0; i < N; ++i) {
            snap.x_inst[i] = static_cast<double>(s.X[i]) / n;
            snap.y_inst[i] = static_cast<double>(s.Y[i]) / n;
            if (t > 0.0) {
                snap.x_avg[i] = ix[i] / (n * t);
                snap.y_avg[i] = iy[i] / (n * t);
            } else {
                snap.x_avg[i] = snap.x_inst[i];
                snap.y_avg[i] = snap.y_inst[i];
            }
        }
        traj.snapshots.push_back(std::move(snap));
    };

    while (true) {
        if (opts.max_events != 0 && traj.event_count >= opts.max_events)
            break;  // stop at the last event's clock

        double next_boundary = T;
        enum class Boundary { horizon, grid, removal } btype = Boundary::horizon;
        // a grid time equal to the horizon must still be served
        if (grid_pos < sample_grid.size() && sample_grid[grid_pos] <= next_boundary) {
            next_boundary = sample_grid[grid_pos];
            btype = Boundary::grid;
        }
        // grid times equal to a removal time snapshot first (pre-removal)
        if (epoch_idx + 1 < epochs.size()) {
            double tr = epochs[epoch_idx + 1].t_start;
            if (tr < next_boundary && tr <= T) {
                next_boundary = tr;
                btype = Boundary::removal;
            }
        }

        double dt = sim->draw_waiting_time(rng);
        if (sim->state().clock + dt < next_boundary) {
            SimEvent ev = sim->apply_next_event(dt, rng);
            ++traj.event_count;
            if (opts.record_events) traj.events.push_back(ev);
            if (opts.paranoid_checks) sim->check_conservation();
            continue;
        }

        sim->advance_clock(next_boundary);
        if (btype == Boundary::horizon) break;
        if (btype == Boundary::grid) {
            snapshot(next_boundary);
            ++grid_pos;
            continue;
        }
        // removal boundary
        ++epoch_idx;
        const Epoch& ep = epochs[epoch_idx];
        auto carried = sim->take_integrals();
        RemovalOutcome ro = apply_node_removal(sim->state(), ep.removed, ep.graph, rng);
        traj.relocation_fallback_used |= ro.fallback_used;
        Vec ix(ep.graph.n), iy(ep.graph.n);
        {
            std::vector<char> gone(carried.first.size(), 0);
            for (int v : ep.removed) gone[v] = 1;
            int w = 0;
            for (std::size_t v = 0; v < carried.first.size(); ++v) {
                if (gone[v]) continue;
                ix[w] = carried.first[v];
                iy[w] = carried.second[v];
                ++w;
            }
        }
        sim = std::make_unique<Simulation>(ep.graph, ep.kernel, ro.state);
        sim->seed_integrals(std::move(ix), std::move(iy));
    }

    sim->flush_integrals();
    sim->resync_rates();
    traj.integral_X = sim->integral_X();
    traj.integral_Y = sim->integral_Y();
    traj.X_end = sim->state().X;
    traj.Y_end = sim->state().Y;
    traj.t_end = sim->state().clock;
    traj.final_epoch = static_cast<int>(epoch_idx);
    return traj;
}

// Static-topology convenience wrapper.
inline Trajectory run(const Graph& g, const Kernel& k, int n, double kappa, double T,
                      std::uint64_t seed, const std::vector<double>& sample_grid,
                      const RunOptions& opts = {}) {
    std::vector<Epoch> epochs(1);
    epochs[0].t_start = 0.0;
    epochs[0].graph = g;
    epochs[0].kernel = k;
    return run_epochs(epochs, n, kappa, T, Rng(seed), sample_grid, opts);
}

namespace detail {

// Replay the recorded event stream, invoking visit(t_prev, t_now, X, Y)
// for every constant segment.
template <typename F>
inline void replay_segments(const Trajectory& traj, F&& visit) {
    if (!traj.events_recorded)
        throw ValidationError("trajectory replay requires record_events");
    std::vector<int> X = traj.X0, Y = traj.Y0;
    double t_prev = 0.0;
    for (const SimEvent& ev : traj.events) {
        visit(t_prev, ev.t, X, Y);
        std::vector<int>& C = (ev.type == WalkerType::x) ? X : Y;
        if (ev.to != ev.from) {
            --C[ev.from];
            ++C[ev.to];
        }
        t_prev = ev.t;
    }
    visit(t_prev, traj.t_end, X, Y);
}

}  // namespace detail

// x_hat(t) - y_hat(t) from exact integrals: stored values at snapshot
// times / the end of the run, or an event replay for arbitrary t.
inline Vec estimator_z_hat(const Trajectory& traj, double t) {
    if (!(t > 0.0) || t > traj.t_end + 1e-12)
        throw ValidationError("estimator_z_hat: need 0 < t <= recorded horizon");
    const double nt = static_cast<double>(traj.n) * t;
    for (const SimSnapshot& s : traj.snapshots) {
        if (s.t == t) {
            Vec z(s.x_avg.size());
            for (std::size_t i = 0; i < z.size(); ++i) z[i] = s.x_avg[i] - s.y_avg[i];
            return z;
        }
    }
    if (t == traj.t_end) {
        Vec z(traj.integral_X.size());
        for (std::size_t i = 0; i < z.size(); ++i)
            z[i] = (traj.integral_X[i] - traj.integral_Y[i]) / nt;
        return z;
    }
    Vec ix(traj.X0.size(), 0.0), iy(traj.Y0.size(), 0.0);
    detail::replay_segments(traj, [&](double a, double b, const std::vector<int>& X,
                                      const std::vector<int>& Y) {
        double lo = std::min(a, t), hi = std::min(b, t);
        if (hi <= lo) return;
        for (std::size_t i = 0; i < ix.size(); ++i) {
            ix[i] += X[i] * (hi - lo);
            iy[i] += Y[i] * (hi - lo);
        }
    });
    Vec z(ix.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (ix[i] - iy[i]) / nt;
    return z;
}

namespace detail {

// Walks the piecewise-constant path once, reporting [t0,t1) x in-set flags.
// Membership: CS(z(s), center) >= 1 - radius with z the instantaneous
// count difference; z = 0 counts as outside.
template <typename F>
inline void replay_membership(const Trajectory& traj, const Vec& center, double radius, F&& visit) {
    if (norm2(center) < 1e-14) throw ValidationError("neighborhood center must be nonzero");
    const double c2 = dot(center, center);
    const double thr = 1.0 - radius;
    detail::replay_segments(traj, [&](double a, double b, const std::vector<int>& X,
                                      const std::vector<int>& Y) {
        if (b <= a) return;
        double s1 = 0.0;
        long long s2 = 0;
        for (std::size_t i = 0; i < center.size(); ++i) {
            long long d = X[i] - Y[i];
            s1 += static_cast<double>(d) * center[i];
            s2 += d * d;
        }
        bool inside = false;
        if (s2 > 0) {
            double cs = std::abs(s1) / std::sqrt(static_cast<double>(s2) * c2);
            inside = cs >= thr;
        }
        visit(a, b, inside);
    });
}

}  // namespace detail

// Fraction of [w0, w1] spent in the CS-neighborhood of center.
inline double occupation_fraction(const Trajectory& traj, const Vec& center, double radius,
                                  double w0, double w1) {
    if (!(w1 > w0) || w0 < 0.0 || w1 > traj.t_end + 1e-12)
        throw ValidationError("occupation_fraction: bad window");
    double inside_time = 0.0;
    detail::replay_membership(traj, center, radius, [&](double a, double b, bool inside) {
        if (!inside) return;
        double lo = std::max(a, w0), hi = std::min(b, w1);
        if (hi > lo) inside_time += hi - lo;
    });
    return inside_time / (w1 - w0);
}

// First exit after the first entry; nullopt when the path never enters or
// never leaves afterwards.
inline std::optional<double> exit_time(const Trajectory& traj, const Vec& center, double radius) {
    bool entered = false;
    std::optional<double> result;
    detail::replay_membership(traj, center, radius, [&](double a, double b, bool inside) {
        (void)b;
        if (result) return;
        if (inside && !entered) entered = true;
        if (!inside && entered) result = a;
    });
    return result;
}

}  // namespace fwalk
