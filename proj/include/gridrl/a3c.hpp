// Asynchronous advantage actor-critic. Each worker loops: synchronize local
// parameters from the shared store, collect a rollout of at most t_max
// transitions, accumulate policy/value gradients over it, and apply an
// asynchronous shared update. The shared store is the only shared mutable
// state; reads and updates are untorn at tensor granularity.
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "gridrl/env.hpp"
#include "gridrl/net.hpp"

namespace gridrl {

// ---------------------------------------------------------------------------
// n-step returns
// ---------------------------------------------------------------------------

// returns[i] = r_i + gamma * returns[i+1], seeded with the bootstrap value
// (zero for terminal segments).
inline std::vector<double> compute_returns(const std::vector<double>& rewards, bool terminal,
                                           double bootstrap_value, double gamma) {
    detail::check(!rewards.empty(), "compute_returns: empty reward sequence");
    std::vector<double> returns(rewards.size());
    double r = terminal ? 0.0 : bootstrap_value;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        r = rewards[i] + gamma * r;
        returns[i] = r;
    }
    return returns;
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

struct Transition {
    Observation obs;
    Action action;
    double reward = 0.0;
    double log_prob = 0.0;
    double value = 0.0;
    double entropy = 0.0;
};

struct Rollout {
    std::vector<Transition> transitions;
    double bootstrap_value = 0.0;  // 0 exactly when terminal
    bool terminal = false;

    std::size_t size() const { return transitions.size(); }
};

// ---------------------------------------------------------------------------
// Action sampling
// ---------------------------------------------------------------------------

namespace a3c_detail {

template <class Real>
int sample_categorical(const Real* probs, const std::uint8_t* mask, int n, std::mt19937& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double u = u01(rng);
    double cum = 0.0;
    int last_legal = -1;
    for (int i = 0; i < n; ++i) {
        if (mask && !mask[i]) continue;
        last_legal = i;
        cum += static_cast<double>(probs[i]);
        if (u < cum) return i;
    }
    return last_legal;  // rounding fallback
}

inline int sample_uniform_legal(const std::uint8_t* mask, int n, std::mt19937& rng) {
    int legal = 0;
    for (int i = 0; i < n; ++i) legal += mask[i] ? 1 : 0;
    std::uniform_int_distribution<int> pick(0, legal - 1);
    int k = pick(rng);
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        if (k-- == 0) return i;
    }
    return -1;  // unreachable: mask has at least one legal entry
}

template <class Real>
int argmax_masked(const std::vector<Real>& v, const std::uint8_t* mask) {
    int best = -1;
    for (int i = 0; i < static_cast<int>(v.size()); ++i) {
        if (mask && !mask[i]) continue;
        if (best < 0 || v[i] > v[best]) best = i;
    }
    return best;
}

}  // namespace a3c_detail

// Epsilon-greedy over the composite policy: with probability epsilon a
// uniformly random available function id (uniform pixel for spatial
// arguments), otherwise a sample from the network's distributions.
template <class Real>
Action select_action(const ForwardTrace<Real>& trace, int resolution, double epsilon,
                     std::mt19937& rng) {
    const int num_fn = static_cast<int>(trace.fn_probs.size());
    int fn;
    bool explore = false;
    if (epsilon > 0.0) {
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        explore = u01(rng) < epsilon;
    }
    if (explore)
        fn = a3c_detail::sample_uniform_legal(trace.mask.data(), num_fn, rng);
    else
        fn = a3c_detail::sample_categorical(trace.fn_probs.data(), trace.mask.data(), num_fn, rng);
    if (!function_requires_spatial(fn)) return Action::non_spatial(fn);
    int pixel;
    if (explore) {
        std::uniform_int_distribution<int> pick(0, resolution * resolution - 1);
        pixel = pick(rng);
    } else {
        pixel = a3c_detail::sample_categorical(trace.spatial_probs.data(), nullptr,
                                               resolution * resolution, rng);
    }
    return Action::at(fn, pixel % resolution, pixel / resolution);
}

// Greedy evaluation action: mode of the function head, argmax pixel.
template <class Real>
Action greedy_action(const ForwardTrace<Real>& trace, int resolution) {
    const int fn = a3c_detail::argmax_masked(trace.fn_probs, trace.mask.data());
    if (!function_requires_spatial(fn)) return Action::non_spatial(fn);
    const int pixel = a3c_detail::argmax_masked(trace.spatial_probs, nullptr);
    return Action::at(fn, pixel % resolution, pixel / resolution);
}

// ---------------------------------------------------------------------------
// Rollout collection
// ---------------------------------------------------------------------------

// Collects at most t_max transitions starting from the environment's current
// state, stopping early at episode end. The environment must have been
// reset; on terminal rollouts the caller is responsible for resetting before
// the next collection.
template <class Real>
Rollout collect_rollout(GridEnv& env, const ArchitectureSpec& arch,
                        const ParameterSet<Real>& params, int t_max, double epsilon,
                        std::mt19937& rng, ForwardTrace<Real>& trace) {
    detail::check(t_max >= 1, "collect_rollout: t_max must be >= 1");
    const int n = arch.obs.resolution;
    Rollout rollout;
    rollout.transitions.reserve(static_cast<std::size_t>(t_max));
    for (int t = 0; t < t_max; ++t) {
        Observation obs = env.observation();
        forward(arch, params, obs, trace);
        const Action action = select_action(trace, n, epsilon, rng);
        Transition tr;
        tr.obs = std::move(obs);
        tr.action = action;
        tr.log_prob = static_cast<double>(log_prob(trace, action, n));
        tr.value = static_cast<double>(trace.value);
        tr.entropy = static_cast<double>(policy_entropy(trace));
        const StepResult sr = env.step(action);
        tr.reward = sr.reward;
        rollout.transitions.push_back(std::move(tr));
        if (sr.done) {
            rollout.terminal = true;
            rollout.bootstrap_value = 0.0;
            return rollout;
        }
    }
    forward(arch, params, env.observation(), trace);
    rollout.bootstrap_value = static_cast<double>(trace.value);
    return rollout;
}

// ---------------------------------------------------------------------------
// Gradient accumulation
// ---------------------------------------------------------------------------

struct GradientStats {
    double norm = 0.0;        // global L2 norm before clipping
    double clip_scale = 1.0;  // factor applied (1 when under the bound)
};

// Accumulates into params' grad buffers the gradient of
//   sum_i [ -log pi(a_i|s_i) * (R_i - V(s_i)) + value_coef * (R_i - V(s_i))^2
//           - beta * entropy_i ]
// where the advantage (R_i - V(s_i)) is a constant in the policy term. The
// total gradient is clipped to `grad_clip` in global L2 norm (0 disables).
template <class Real>
GradientStats accumulate_gradients(const ArchitectureSpec& arch, ParameterSet<Real>& params,
                                   const Rollout& rollout, double gamma, double beta,
                                   double value_coef, double grad_clip,
                                   ForwardTrace<Real>& trace, BackwardScratch<Real>& ws) {
    detail::check(!rollout.transitions.empty(), "accumulate_gradients: empty rollout");
    std::vector<double> rewards;
    rewards.reserve(rollout.size());
    for (const Transition& tr : rollout.transitions) rewards.push_back(tr.reward);
    const std::vector<double> returns =
        compute_returns(rewards, rollout.terminal, rollout.bootstrap_value, gamma);

    const int n = arch.obs.resolution;
    const int npix = n * n;
    const int num_fn = arch.obs.num_functions;
    params.zero_grads();

    HeadGradients<Real> head;
    head.d_fn_logits.assign(static_cast<std::size_t>(num_fn), Real(0));
    head.d_spatial_logits.assign(static_cast<std::size_t>(npix), Real(0));

    for (std::size_t i = 0; i < rollout.size(); ++i) {
        const Transition& tr = rollout.transitions[i];
        forward(arch, params, tr.obs, trace);
        const Real value = trace.value;
        const Real advantage = static_cast<Real>(returns[i]) - value;

        head.d_value = Real(-2.0 * value_coef) * (static_cast<Real>(returns[i]) - value);

        std::fill(head.d_fn_logits.begin(), head.d_fn_logits.end(), Real(0));
        std::fill(head.d_spatial_logits.begin(), head.d_spatial_logits.end(), Real(0));

        // policy term: d(-A log p[a]) / dlogit_j = A * (p_j - delta_aj), zero
        // on masked ids since their probability is exactly zero
        const int a_fn = tr.action.function_id;
        for (int j = 0; j < num_fn; ++j)
            head.d_fn_logits[static_cast<std::size_t>(j)] =
                advantage * (trace.fn_probs[static_cast<std::size_t>(j)] -
                             Real(j == a_fn ? 1 : 0));
        if (tr.action.spatial) {
            const int a_px = pixel_index(*tr.action.spatial, n);
            for (int j = 0; j < npix; ++j)
                head.d_spatial_logits[static_cast<std::size_t>(j)] =
                    advantage * (trace.spatial_probs[static_cast<std::size_t>(j)] -
                                 Real(j == a_px ? 1 : 0));
        }
        if (beta != 0.0) {
            entropy_backward(trace.fn_probs.data(), trace.mask.data(), num_fn,
                             Real(-beta), head.d_fn_logits.data());
            entropy_backward(trace.spatial_probs.data(), trace.ones_mask.data(), npix,
                             Real(-beta), head.d_spatial_logits.data());
        }
        backward(arch, params, trace, head, ws);
    }

    double sq = 0.0;
    for (const auto& p : params)
        for (Real g : p.tensor.grad) {
            if (!std::isfinite(static_cast<double>(g)))
                throw std::runtime_error(
                    "accumulate_gradients: non-finite gradient (rollout length " +
                    std::to_string(rollout.size()) + ", terminal " +
                    std::to_string(rollout.terminal) + ")");
            sq += static_cast<double>(g) * static_cast<double>(g);
        }
    GradientStats stats;
    stats.norm = std::sqrt(sq);
    if (grad_clip > 0.0 && stats.norm > grad_clip) {
        stats.clip_scale = grad_clip / stats.norm;
        const Real s = static_cast<Real>(stats.clip_scale);
        for (auto& p : params)
            for (Real& g : p.tensor.grad) g *= s;
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Shared parameter store
// ---------------------------------------------------------------------------

enum class OptimizerKind { kRmsProp, kSgd };

inline const char* optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::kRmsProp ? "rmsprop" : "sgd";
}

inline OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "rmsprop") return OptimizerKind::kRmsProp;
    if (name == "sgd") return OptimizerKind::kSgd;
    throw std::invalid_argument("unknown optimizer: " + name);
}

struct UpdateConfig {
    OptimizerKind optimizer = OptimizerKind::kRmsProp;
    double learning_rate = 5e-4;
    double rmsprop_alpha = 0.99;
    double rmsprop_epsilon = 1e-8;
};

// Global parameters plus shared RMSProp statistics and the global step
// counter T. Snapshot reads and updates lock per tensor, so every tensor read
// is untorn; a strict mode serializes everything behind one lock for
// debugging.
template <class Real>
class SharedStore {
  public:
    explicit SharedStore(const ParameterSet<Real>& initial, bool strict_locking = false)
        : strict_(strict_locking) {
        for (const auto& p : initial) {
            auto slot = std::make_unique<Slot>();
            slot->name = p.name;
            slot->value = p.tensor;
            slot->value.zero_grad();
            slot->opt_g.assign(p.tensor.data.size(), Real(0));
            slots_.push_back(std::move(slot));
        }
    }

    // Copies current values into a structurally identical parameter set.
    void snapshot(ParameterSet<Real>& out) const {
        std::unique_lock<std::mutex> strict_lock = maybe_strict_lock();
        detail::check(out.size() == slots_.size(), "SharedStore: snapshot structure mismatch");
        for (std::size_t i = 0; i < slots_.size(); ++i) {
            std::lock_guard<std::mutex> lock(slots_[i]->m);
            out[i].tensor.data = slots_[i]->value.data;
        }
    }

    ParameterSet<Real> copy() const {
        std::unique_lock<std::mutex> strict_lock = maybe_strict_lock();
        ParameterSet<Real> out;
        for (const auto& slot : slots_) {
            std::lock_guard<std::mutex> lock(slot->m);
            out.add(slot->name, slot->value);
        }
        return out;
    }

    // Applies one RMSProp/SGD update using the gradients stored in
    // grads' .grad buffers, then advances T by t_increment.
    void apply_update(const ParameterSet<Real>& grads, const UpdateConfig& cfg,
                      long long t_increment) {
        std::unique_lock<std::mutex> strict_lock = maybe_strict_lock();
        detail::check(grads.size() == slots_.size(), "SharedStore: update structure mismatch");
        const Real lr = static_cast<Real>(cfg.learning_rate);
        const Real alpha = static_cast<Real>(cfg.rmsprop_alpha);
        const Real eps = static_cast<Real>(cfg.rmsprop_epsilon);
        for (std::size_t i = 0; i < slots_.size(); ++i) {
            Slot& slot = *slots_[i];
            const std::vector<Real>& g = grads[i].tensor.grad;
            std::lock_guard<std::mutex> lock(slot.m);
            Real* v = slot.value.data.data();
            if (cfg.optimizer == OptimizerKind::kRmsProp) {
                Real* acc = slot.opt_g.data();
                for (std::size_t k = 0; k < g.size(); ++k) {
                    acc[k] = alpha * acc[k] + (Real(1) - alpha) * g[k] * g[k];
                    v[k] -= lr * g[k] / std::sqrt(acc[k] + eps);
                }
            } else {
                for (std::size_t k = 0; k < g.size(); ++k) v[k] -= lr * g[k];
            }
        }
        step_.fetch_add(t_increment, std::memory_order_relaxed);
    }

    long long global_step() const { return step_.load(std::memory_order_relaxed); }

  private:
    struct Slot {
        std::string name;
        Tensor<Real> value;
        std::vector<Real> opt_g;
        mutable std::mutex m;
    };

    std::unique_lock<std::mutex> maybe_strict_lock() const {
        return strict_ ? std::unique_lock<std::mutex>(strict_m_)
                       : std::unique_lock<std::mutex>();
    }

    bool strict_;
    mutable std::mutex strict_m_;
    std::vector<std::unique_ptr<Slot>> slots_;
    std::atomic<long long> step_{0};
};

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 5e-4;
    double discount = 0.99;
    int workers = 4;
    int t_max = 16;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    double epsilon_fraction = 0.25;  // of the expected total environment steps
    double entropy_coef = 0.0;       // beta; optional, e.g. 1e-3
    double value_coef = 0.5;
    double grad_clip = 40.0;
    long long episodes = 5000;  // total episode budget across workers
    int resolution = 16;
    int episode_cap = 120;
    OptimizerKind optimizer = OptimizerKind::kRmsProp;
    double rmsprop_alpha = 0.99;
    double rmsprop_epsilon = 1e-8;
    int eval_interval = 250;   // episodes between greedy evaluations (0 = never)
    int eval_episodes = 100;
    double stop_eval_mean = std::numeric_limits<double>::quiet_NaN();  // early stop
    int checkpoint_interval = 1000;  // episodes between periodic checkpoints (0 = never)
    bool strict_locking = false;

    void validate() const {
        detail::check(discount > 0.0 && discount <= 1.0, "discount must be in (0, 1]");
        detail::check(workers >= 1, "workers must be >= 1");
        detail::check(t_max >= 1, "t_max must be >= 1");
        detail::check(episodes >= 1, "episodes must be >= 1");
        detail::check(learning_rate > 0.0, "learning_rate must be positive");
        detail::check(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 &&
                          epsilon_end <= 1.0,
                      "epsilon bounds must be in [0, 1]");
        detail::check(epsilon_fraction > 0.0 && epsilon_fraction <= 1.0,
                      "epsilon_fraction must be in (0, 1]");
        detail::check(eval_episodes >= 1, "eval_episodes must be >= 1");
        detail::check(resolution >= 8 && resolution <= 64, "resolution must be in [8, 64]");
        detail::check(episode_cap >= 1, "episode_cap must be >= 1");
    }
};

inline double epsilon_at(const TrainConfig& cfg, long long global_step) {
    const double total = static_cast<double>(cfg.episodes) * cfg.episode_cap;
    const double anneal = cfg.epsilon_fraction * total;
    if (anneal <= 0.0 || static_cast<double>(global_step) >= anneal) return cfg.epsilon_end;
    const double frac = static_cast<double>(global_step) / anneal;
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
}

struct EpisodeRecord {
    long long episode = 0;  // 1-based completion index across all workers
    int worker = 0;
    long long global_step = 0;
    double score = 0.0;
    long long wallclock_ms = 0;
    int steps = 0;  // episode length (not part of the CSV schema)
};

struct EvalPoint {
    long long episode = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double max = 0.0;
    long long global_step = 0;
};

struct TrainHooks {
    std::function<void(const EpisodeRecord&)> on_episode;
    std::function<void(const EvalPoint&, const ParameterSet<float>&, bool is_best)> on_eval;
    std::function<void(long long, const ParameterSet<float>&)> on_checkpoint;
};

struct TrainSetup {
    Minigame game = Minigame::kBeacon;
    Variant variant = Variant::kBaseline;
    TrainConfig config;
    std::uint64_t seed = 0;
    const ParameterSet<float>* initial_params = nullptr;  // transfer start point
    TrainHooks hooks;
};

struct TrainResult {
    ArchitectureSpec arch;
    ParameterSet<float> final_params;
    ParameterSet<float> best_params;
    double best_eval_mean = std::numeric_limits<double>::quiet_NaN();
    long long best_eval_episode = -1;
    double recent_score_mean = 0.0;  // mean of last <=100 training episodes
    std::vector<EvalPoint> eval_points;
    std::vector<EpisodeRecord> episodes;
    long long total_steps = 0;
    long long episodes_completed = 0;
    long long env_warnings = 0;

    // First evaluation point whose mean reaches the threshold; -1 if none.
    long long episodes_to_threshold(double threshold) const {
        for (const EvalPoint& p : eval_points)
            if (p.mean >= threshold) return p.episode;
        return -1;
    }
};

// Greedy evaluation of fixed parameters; read-only, deterministic in seed.
inline ScoreStats evaluate(const ArchitectureSpec& arch, const ParameterSet<float>& params,
                          Minigame game, int episodes, std::uint64_t seed,
                          int episode_cap = 120) {
    GridEnv env(EnvConfig{game, arch.obs.resolution, episode_cap});
    ForwardTrace<float> trace;
    std::vector<double> scores;
    scores.reserve(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
        env.reset(mix_seed(seed, static_cast<std::uint64_t>(e)));
        double score = 0.0;
        while (!env.done()) {
            forward(arch, params, env.observation(), trace);
            const StepResult r = env.step(greedy_action(trace, arch.obs.resolution));
            score = r.episode_score;
        }
        scores.push_back(score);
    }
    return summarize_scores(std::move(scores));
}

inline TrainResult train(const TrainSetup& setup) {
    setup.config.validate();
    const TrainConfig& cfg = setup.config;
    const ArchitectureSpec arch{setup.variant, observation_spec_for(cfg.resolution)};
    ParameterSet<float> init = setup.initial_params
                                   ? *setup.initial_params
                                   : build_network<float>(arch, setup.seed);
    SharedStore<float> store(init, cfg.strict_locking);
    const UpdateConfig update_cfg{cfg.optimizer, cfg.learning_rate, cfg.rmsprop_alpha,
                                  cfg.rmsprop_epsilon};
    const bool deterministic = cfg.workers == 1;
    const auto t0 = std::chrono::steady_clock::now();

    std::mutex book_m;  // episode bookkeeping + hooks
    long long episodes_done = 0;
    std::deque<double> recent_scores;
    std::atomic<bool> stop{false};
    std::atomic<long long> warnings{0};
    TrainResult result;
    result.arch = arch;
    std::exception_ptr first_error;
    std::mutex error_m;

    auto run_eval = [&](long long at_episode) {
        ParameterSet<float> snap = store.copy();
        const ScoreStats stats =
            evaluate(arch, snap, setup.game, cfg.eval_episodes,
                     mix_seed(setup.seed, 0xEA11ULL + static_cast<std::uint64_t>(at_episode)),
                     cfg.episode_cap);
        EvalPoint point{at_episode, stats.mean, stats.stddev, stats.max, store.global_step()};
        bool is_best = false;
        {
            std::lock_guard<std::mutex> lock(book_m);
            result.eval_points.push_back(point);
            if (std::isnan(result.best_eval_mean) || stats.mean > result.best_eval_mean) {
                result.best_eval_mean = stats.mean;
                result.best_eval_episode = at_episode;
                result.best_params = snap;
                is_best = true;
            }
            if (setup.hooks.on_eval) setup.hooks.on_eval(point, snap, is_best);
        }
        if (!std::isnan(cfg.stop_eval_mean) && stats.mean >= cfg.stop_eval_mean)
            stop.store(true, std::memory_order_relaxed);
    };

    auto worker_fn = [&](int worker_id) {
        try {
            GridEnv env(EnvConfig{setup.game, cfg.resolution, cfg.episode_cap});
            std::mt19937 rng(static_cast<std::uint32_t>(
                mix_seed(setup.seed, 0xA0ULL + static_cast<std::uint64_t>(worker_id))));
            std::uint64_t episode_stream = 0;
            auto next_seed = [&] {
                return mix_seed(setup.seed, (static_cast<std::uint64_t>(worker_id + 1) << 40) +
                                                episode_stream++);
            };
            env.reset(next_seed());
            ParameterSet<float> local = init;
            ForwardTrace<float> trace;
            BackwardScratch<float> ws;

            while (true) {
                store.snapshot(local);
                const double eps = epsilon_at(cfg, store.global_step());
                Rollout rollout =
                    collect_rollout(env, arch, local, cfg.t_max, eps, rng, trace);
                accumulate_gradients(arch, local, rollout, cfg.discount, cfg.entropy_coef,
                                     cfg.value_coef, cfg.grad_clip, trace, ws);
                store.apply_update(local, update_cfg, static_cast<long long>(rollout.size()));

                if (!rollout.terminal) continue;

                // episode ended exactly at the rollout boundary
                const double score = env.episode_score();
                const int ep_steps = env.steps();
                long long ep_index;
                bool do_eval = false, do_ckpt = false;
                {
                    std::lock_guard<std::mutex> lock(book_m);
                    ep_index = ++episodes_done;
                    recent_scores.push_back(score);
                    if (recent_scores.size() > 100) recent_scores.pop_front();
                    EpisodeRecord rec;
                    rec.episode = ep_index;
                    rec.worker = worker_id;
                    rec.global_step = store.global_step();
                    rec.score = score;
                    rec.steps = ep_steps;
                    rec.wallclock_ms =
                        deterministic
                            ? 0
                            : std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
                    if (setup.hooks.on_episode) setup.hooks.on_episode(rec);
                    result.episodes.push_back(rec);
                    do_eval = cfg.eval_interval > 0 && ep_index % cfg.eval_interval == 0;
                    do_ckpt =
                        cfg.checkpoint_interval > 0 && ep_index % cfg.checkpoint_interval == 0;
                }
                if (do_eval) run_eval(ep_index);
                if (do_ckpt && setup.hooks.on_checkpoint) {
                    ParameterSet<float> snap = store.copy();
                    std::lock_guard<std::mutex> lock(book_m);
                    setup.hooks.on_checkpoint(ep_index, snap);
                }
                if (ep_index >= cfg.episodes || stop.load(std::memory_order_relaxed)) {
                    stop.store(true, std::memory_order_relaxed);
                    warnings.fetch_add(env.warning_count(), std::memory_order_relaxed);
                    break;
                }
                env.reset(next_seed());
            }
        } catch (...) {
            {
                std::lock_guard<std::mutex> lock(error_m);
                if (!first_error) first_error = std::current_exception();
            }
            stop.store(true, std::memory_order_relaxed);
        }
    };

    if (deterministic) {
        worker_fn(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(cfg.workers));
        for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(worker_fn, w);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    result.final_params = store.copy();
    if (std::isnan(result.best_eval_mean)) result.best_params = result.final_params;
    result.total_steps = store.global_step();
    result.episodes_completed = episodes_done;
    result.env_warnings = warnings.load();
    double recent_sum = 0.0;
    for (double s : recent_scores) recent_sum += s;
    result.recent_score_mean =
        recent_scores.empty() ? 0.0 : recent_sum / static_cast<double>(recent_scores.size());
    return result;
}

}  // namespace gridrl
