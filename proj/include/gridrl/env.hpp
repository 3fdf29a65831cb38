// Grid minigame suite. Three games share one observation layout (screen,
// minimap, flat features, availability mask) and one global function
// registry, so a policy head trained on one game is shape-compatible with
// every other.
//
//   beacon  N x N world, one unit, one beacon; +1 on reaching the beacon,
//           which then respawns at a random cell.
//   shards  N x N world, two units, 20 shards; +1 per shard entered by any
//           unit; the batch respawns when exhausted.
//   hunt    2N x 2N world viewed through an N x N camera window; 10
//           stationary targets; attack_screen on a visible target kills it
//           for +1; move_camera pans the window.
//
// A spatial move sets a destination; units advance one cell per step toward
// it (Chebyshev metric). Unavailable function ids are coerced to no_op and
// counted rather than raised.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridrl/observation.hpp"

namespace gridrl {

enum class Minigame { kBeacon, kShards, kHunt };

inline const char* minigame_name(Minigame g) {
    switch (g) {
        case Minigame::kBeacon: return "beacon";
        case Minigame::kShards: return "shards";
        case Minigame::kHunt: return "hunt";
    }
    return "?";
}

inline Minigame parse_minigame(const std::string& name) {
    if (name == "beacon") return Minigame::kBeacon;
    if (name == "shards") return Minigame::kShards;
    if (name == "hunt") return Minigame::kHunt;
    throw std::invalid_argument("unknown minigame: " + name);
}

struct EnvConfig {
    Minigame game = Minigame::kBeacon;
    int resolution = 16;   // N, in [8, 64]
    int episode_cap = 120; // decision steps per episode
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    double episode_score = 0.0;
};

// All minigames share one observation layout at a given resolution; this is
// what makes checkpoints transfer-compatible across them.
inline ObservationSpec observation_spec_for(int resolution) {
    return ObservationSpec{3, 2, resolution, 2, kNumFunctions};
}

// Deterministic 64-bit mix used to derive per-episode seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class GridEnv {
  public:
    static constexpr int kShardCount = 20;
    static constexpr int kHuntTargets = 10;

    struct Unit {
        int x = 0, y = 0;          // world coordinates
        int dest_x = 0, dest_y = 0;
        bool has_dest = false;
    };

    explicit GridEnv(EnvConfig cfg) : cfg_(cfg) {
        detail::check(cfg_.resolution >= 8 && cfg_.resolution <= 64,
                      "resolution must be in [8, 64]");
        detail::check(cfg_.episode_cap >= 1, "episode_cap must be >= 1");
        n_ = cfg_.resolution;
        world_ = (cfg_.game == Minigame::kHunt) ? 2 * n_ : n_;
        shard_grid_.assign(static_cast<std::size_t>(world_) * world_, 0);
        target_grid_.assign(static_cast<std::size_t>(world_) * world_, 0);
        explored_.assign(static_cast<std::size_t>(world_) * world_, 0);
    }

    ObservationSpec spec() const {
        return ObservationSpec{3, 2, n_, 2, kNumFunctions};
    }
    const EnvConfig& config() const { return cfg_; }

    // Observation of the current state; safe to call between steps.
    Observation observation() const { return make_observation(); }

    Observation reset(std::uint64_t seed) {
        rng_.seed(seed);
        steps_ = 0;
        score_ = 0.0;
        done_ = false;
        started_ = true;
        units_.clear();
        selected_.clear();
        std::fill(shard_grid_.begin(), shard_grid_.end(), std::uint8_t(0));
        std::fill(target_grid_.begin(), target_grid_.end(), std::uint8_t(0));
        std::fill(explored_.begin(), explored_.end(), std::uint8_t(0));
        shards_remaining_ = 0;
        shards_collected_batch_ = 0;
        targets_alive_ = 0;
        cam_x_ = cam_y_ = 0;

        switch (cfg_.game) {
            case Minigame::kBeacon: {
                units_.push_back(make_unit(random_cell()));
                PixelCoord b = random_cell();
                while (b.x == units_[0].x && b.y == units_[0].y) b = random_cell();
                beacon_ = b;
                break;
            }
            case Minigame::kShards: {
                units_.push_back(make_unit(random_cell()));
                PixelCoord second = random_cell();
                while (second.x == units_[0].x && second.y == units_[0].y) second = random_cell();
                units_.push_back(make_unit(second));
                respawn_shards();
                break;
            }
            case Minigame::kHunt: {
                units_.push_back(make_unit(random_cell()));
                for (int placed = 0; placed < kHuntTargets;) {
                    PixelCoord c = random_cell();
                    if ((c.x == units_[0].x && c.y == units_[0].y) || target_grid_[cell(c.x, c.y)])
                        continue;
                    target_grid_[cell(c.x, c.y)] = 1;
                    ++placed;
                }
                targets_alive_ = kHuntTargets;
                center_camera_on(units_[0].x, units_[0].y);
                break;
            }
        }
        selected_.assign(units_.size(), 0);
        return make_observation();
    }

    StepResult step(const Action& action) {
        if (!started_) throw std::logic_error("step() before reset()");
        if (done_) throw std::logic_error("step() after episode end; call reset()");
        validate(action);

        const std::vector<std::uint8_t> avail = available_actions();
        int fn = action.function_id;
        if (!avail[static_cast<std::size_t>(fn)]) {
            ++warnings_;
            fn = kNoOp;
        }

        double reward = 0.0;
        apply_function(fn, action, reward);
        advance_units();
        reward += movement_events();

        ++steps_;
        score_ += reward;
        done_ = steps_ >= cfg_.episode_cap ||
                (cfg_.game == Minigame::kHunt && targets_alive_ == 0);
        return StepResult{make_observation(), reward, done_, score_};
    }

    // no_op and the selection functions are always legal; move/attack require
    // a non-empty selection; move_camera exists only in hunt.
    std::vector<std::uint8_t> available_actions() const {
        std::vector<std::uint8_t> avail(kNumFunctions, 0);
        avail[kNoOp] = 1;
        avail[kSelectAll] = 1;
        avail[kSelectUnit1] = 1;
        avail[kSelectUnit2] = 1;
        const bool any_selected =
            std::any_of(selected_.begin(), selected_.end(), [](std::uint8_t s) { return s != 0; });
        avail[kMoveScreen] = any_selected;
        avail[kAttackScreen] = any_selected;
        avail[kMoveCamera] = cfg_.game == Minigame::kHunt;
        return avail;
    }

    bool done() const { return done_; }
    int steps() const { return steps_; }
    double episode_score() const { return score_; }
    long long warning_count() const { return warnings_; }

    // State accessors for scripted policies and tests.
    const std::vector<Unit>& units() const { return units_; }
    const std::vector<std::uint8_t>& selected() const { return selected_; }
    int selected_count() const {
        return static_cast<int>(std::count(selected_.begin(), selected_.end(), std::uint8_t(1)));
    }
    PixelCoord beacon_pos() const { return beacon_; }
    bool has_shard(int x, int y) const { return shard_grid_[cell(x, y)] != 0; }
    int shards_remaining() const { return shards_remaining_; }
    int shards_collected_in_batch() const { return shards_collected_batch_; }
    bool has_target(int x, int y) const { return target_grid_[cell(x, y)] != 0; }
    int targets_alive() const { return targets_alive_; }
    PixelCoord camera() const { return PixelCoord{cam_x_, cam_y_}; }
    int world_size() const { return world_; }
    int resolution() const { return n_; }
    double explored_fraction() const {
        const double seen =
            static_cast<double>(std::count(explored_.begin(), explored_.end(), std::uint8_t(1)));
        return seen / static_cast<double>(explored_.size());
    }

  private:
    std::size_t cell(int x, int y) const {
        return static_cast<std::size_t>(y) * world_ + x;
    }

    static Unit make_unit(PixelCoord p) { return Unit{p.x, p.y, p.x, p.y, false}; }

    PixelCoord random_cell() {
        std::uniform_int_distribution<int> dist(0, world_ - 1);
        const int x = dist(rng_);
        const int y = dist(rng_);
        return PixelCoord{x, y};
    }

    void center_camera_on(int wx, int wy) {
        cam_x_ = std::clamp(wx - n_ / 2, 0, world_ - n_);
        cam_y_ = std::clamp(wy - n_ / 2, 0, world_ - n_);
        mark_explored();
    }

    void mark_explored() {
        for (int y = cam_y_; y < cam_y_ + n_; ++y)
            for (int x = cam_x_; x < cam_x_ + n_; ++x) explored_[cell(x, y)] = 1;
    }

    void validate(const Action& action) const {
        detail::check(action.function_id >= 0 && action.function_id < kNumFunctions,
                      "action: function_id out of range");
        const bool wants = function_requires_spatial(action.function_id);
        if (wants != action.spatial.has_value())
            throw std::invalid_argument(
                wants ? "action: spatial argument required for this function"
                      : "action: spatial argument not accepted by this function");
        if (action.spatial) {
            const auto [x, y] = *action.spatial;
            if (x < 0 || x >= n_ || y < 0 || y >= n_)
                throw std::invalid_argument("action: spatial argument out of bounds");
        }
    }

    void apply_function(int fn, const Action& action, double& reward) {
        switch (fn) {
            case kNoOp:
                break;
            case kSelectAll:
                std::fill(selected_.begin(), selected_.end(), std::uint8_t(1));
                break;
            case kSelectUnit1:
                select_only(0);
                break;
            case kSelectUnit2:
                select_only(1);
                break;
            case kMoveScreen:
            case kAttackScreen: {
                const int wx = cam_x_ + action.spatial->x;
                const int wy = cam_y_ + action.spatial->y;
                if (fn == kAttackScreen && cfg_.game == Minigame::kHunt) {
                    if (target_grid_[cell(wx, wy)]) {
                        target_grid_[cell(wx, wy)] = 0;
                        --targets_alive_;
                        reward += 1.0;
                    }
                    break;
                }
                // attack_screen outside hunt behaves as an attack-move.
                for (std::size_t i = 0; i < units_.size(); ++i) {
                    if (!selected_[i]) continue;
                    units_[i].dest_x = wx;
                    units_[i].dest_y = wy;
                    units_[i].has_dest = true;
                }
                break;
            }
            case kMoveCamera: {
                // Spatial argument is a minimap pixel; one minimap pixel
                // covers a 2x2 world block in hunt.
                const int wx = 2 * action.spatial->x;
                const int wy = 2 * action.spatial->y;
                center_camera_on(wx + 1, wy + 1);
                break;
            }
            default:
                break;
        }
    }

    void select_only(std::size_t idx) {
        if (idx >= units_.size()) return;  // no such unit: selection unchanged
        std::fill(selected_.begin(), selected_.end(), std::uint8_t(0));
        selected_[idx] = 1;
    }

    void advance_units() {
        for (Unit& u : units_) {
            if (!u.has_dest) continue;
            const int dx = u.dest_x - u.x;
            const int dy = u.dest_y - u.y;
            u.x += (dx > 0) - (dx < 0);
            u.y += (dy > 0) - (dy < 0);
            if (u.x == u.dest_x && u.y == u.dest_y) u.has_dest = false;
        }
    }

    double movement_events() {
        double reward = 0.0;
        switch (cfg_.game) {
            case Minigame::kBeacon: {
                if (units_[0].x == beacon_.x && units_[0].y == beacon_.y) {
                    reward += 1.0;
                    PixelCoord b = random_cell();
                    while (b.x == units_[0].x && b.y == units_[0].y) b = random_cell();
                    beacon_ = b;
                }
                break;
            }
            case Minigame::kShards: {
                for (const Unit& u : units_) {
                    if (shard_grid_[cell(u.x, u.y)]) {
                        shard_grid_[cell(u.x, u.y)] = 0;
                        --shards_remaining_;
                        ++shards_collected_batch_;
                        reward += 1.0;
                    }
                }
                if (shards_remaining_ == 0) respawn_shards();
                break;
            }
            case Minigame::kHunt:
                break;
        }
        return reward;
    }

    void respawn_shards() {
        shards_remaining_ = 0;
        shards_collected_batch_ = 0;
        std::fill(shard_grid_.begin(), shard_grid_.end(), std::uint8_t(0));
        while (shards_remaining_ < kShardCount) {
            const PixelCoord c = random_cell();
            if (shard_grid_[cell(c.x, c.y)]) continue;
            bool on_unit = false;
            for (const Unit& u : units_)
                if (u.x == c.x && u.y == c.y) on_unit = true;
            if (on_unit) continue;
            shard_grid_[cell(c.x, c.y)] = 1;
            ++shards_remaining_;
        }
    }

    Observation make_observation() const {
        Observation obs;
        obs.screen.resize({3, n_, n_});
        obs.minimap.resize({2, n_, n_});
        obs.flat.resize({2});
        const auto screen_at = [&](int ch, int sx, int sy) -> float& {
            return obs.screen.data[(static_cast<std::size_t>(ch) * n_ + sy) * n_ + sx];
        };
        const auto minimap_at = [&](int ch, int mx, int my) -> float& {
            return obs.minimap.data[(static_cast<std::size_t>(ch) * n_ + my) * n_ + mx];
        };

        // screen ch0: units, ch1: objective (beacon/shards/targets), ch2: selection
        for (std::size_t i = 0; i < units_.size(); ++i) {
            const int sx = units_[i].x - cam_x_;
            const int sy = units_[i].y - cam_y_;
            if (sx < 0 || sx >= n_ || sy < 0 || sy >= n_) continue;
            screen_at(0, sx, sy) = 1.0f;
            if (selected_[i]) screen_at(2, sx, sy) = 1.0f;
        }
        switch (cfg_.game) {
            case Minigame::kBeacon:
                screen_at(1, beacon_.x, beacon_.y) = 1.0f;
                break;
            case Minigame::kShards:
                for (int y = 0; y < n_; ++y)
                    for (int x = 0; x < n_; ++x)
                        if (shard_grid_[cell(x, y)]) screen_at(1, x, y) = 1.0f;
                break;
            case Minigame::kHunt:
                for (int sy = 0; sy < n_; ++sy)
                    for (int sx = 0; sx < n_; ++sx)
                        if (target_grid_[cell(cam_x_ + sx, cam_y_ + sy)]) screen_at(1, sx, sy) = 1.0f;
                break;
        }

        // minimap ch0: explored fraction, ch1: unit presence (coarse in hunt)
        if (cfg_.game == Minigame::kHunt) {
            for (int my = 0; my < n_; ++my) {
                for (int mx = 0; mx < n_; ++mx) {
                    int seen = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            seen += explored_[cell(2 * mx + dx, 2 * my + dy)];
                    minimap_at(0, mx, my) = static_cast<float>(seen) / 4.0f;
                }
            }
            for (const Unit& u : units_) minimap_at(1, u.x / 2, u.y / 2) = 1.0f;
        } else {
            for (int my = 0; my < n_; ++my)
                for (int mx = 0; mx < n_; ++mx) minimap_at(0, mx, my) = 1.0f;
            for (const Unit& u : units_) minimap_at(1, u.x, u.y) = 1.0f;
        }

        obs.flat.data[0] =
            units_.empty() ? 0.0f
                           : static_cast<float>(selected_count()) / static_cast<float>(units_.size());
        obs.flat.data[1] = static_cast<float>(steps_) / static_cast<float>(cfg_.episode_cap);
        obs.available = available_actions();
        return obs;
    }

    EnvConfig cfg_;
    int n_ = 16;
    int world_ = 16;
    std::mt19937 rng_;
    bool started_ = false;
    bool done_ = false;
    int steps_ = 0;
    double score_ = 0.0;
    long long warnings_ = 0;

    std::vector<Unit> units_;
    std::vector<std::uint8_t> selected_;
    PixelCoord beacon_{0, 0};
    std::vector<std::uint8_t> shard_grid_;
    int shards_remaining_ = 0;
    int shards_collected_batch_ = 0;
    std::vector<std::uint8_t> target_grid_;
    int targets_alive_ = 0;
    int cam_x_ = 0, cam_y_ = 0;
    std::vector<std::uint8_t> explored_;
};

// ---------------------------------------------------------------------------
// Scripted policies. These read environment state directly (they are
// benchmark baselines, not learned agents) and only ever issue available
// actions.
// ---------------------------------------------------------------------------

using ScriptedPolicy = std::function<Action(const GridEnv&, std::mt19937&)>;

inline int chebyshev(int ax, int ay, int bx, int by) {
    return std::max(std::abs(ax - bx), std::abs(ay - by));
}

namespace detail {

// Nearest shard to (x, y), optionally excluding one cell; ties break on the
// lowest flat index.
inline bool nearest_shard(const GridEnv& env, int x, int y, PixelCoord exclude, PixelCoord& out) {
    int best = std::numeric_limits<int>::max();
    bool found = false;
    const int n = env.resolution();
    for (int sy = 0; sy < n; ++sy) {
        for (int sx = 0; sx < n; ++sx) {
            if (!env.has_shard(sx, sy)) continue;
            if (sx == exclude.x && sy == exclude.y) continue;
            const int d = chebyshev(x, y, sx, sy);
            if (d < best) {
                best = d;
                out = PixelCoord{sx, sy};
                found = true;
            }
        }
    }
    return found;
}

}  // namespace detail

// beacon: select everything once, then walk straight at the beacon.
inline ScriptedPolicy beacon_oracle_policy() {
    return [](const GridEnv& env, std::mt19937&) -> Action {
        if (env.selected_count() == 0) return Action::non_spatial(kSelectAll);
        const PixelCoord b = env.beacon_pos();
        return Action::at(kMoveScreen, b.x, b.y);
    };
}

// shards: round-robin per-unit control, sending the two units toward nearest
// distinct shards. Each unit gets a fresh order every four steps (select,
// move, select, move); movement continues between orders. Moves are only
// issued once the intended unit is the sole selection, so the policy never
// emits an unavailable action even right after reset.
inline ScriptedPolicy shards_oracle_policy() {
    auto phase = std::make_shared<int>(0);
    return [phase](const GridEnv& env, std::mt19937&) -> Action {
        const auto& units = env.units();
        const int who = (*phase / 2) % 2;  // phases: sel u1, move u1, sel u2, move u2
        const bool move_phase = (*phase % 2) == 1;
        const int select_fn = (who == 0) ? kSelectUnit1 : kSelectUnit2;
        if (!move_phase) {
            *phase = (*phase + 1) % 4;
            return Action::non_spatial(select_fn);
        }
        const bool sole_selection =
            env.selected_count() == 1 && env.selected()[static_cast<std::size_t>(who)];
        if (!sole_selection) return Action::non_spatial(select_fn);  // e.g. after reset
        *phase = (*phase + 1) % 4;
        const int other = 1 - who;
        PixelCoord other_target{-1, -1};
        detail::nearest_shard(env, units[other].x, units[other].y, PixelCoord{-1, -1},
                              other_target);
        PixelCoord target;
        if (!detail::nearest_shard(env, units[who].x, units[who].y, other_target, target) &&
            !detail::nearest_shard(env, units[who].x, units[who].y, PixelCoord{-1, -1}, target))
            return Action::non_spatial(kNoOp);
        return Action::at(kMoveScreen, target.x, target.y);
    };
}

// shards baseline that keeps both units together: select_all, then walk the
// stack toward the shard nearest to unit 0.
inline ScriptedPolicy shards_together_policy() {
    return [](const GridEnv& env, std::mt19937&) -> Action {
        if (env.selected_count() < static_cast<int>(env.units().size()))
            return Action::non_spatial(kSelectAll);
        const auto& u = env.units()[0];
        PixelCoord target;
        if (!detail::nearest_shard(env, u.x, u.y, PixelCoord{-1, -1}, target))
            return Action::non_spatial(kNoOp);
        return Action::at(kMoveScreen, target.x, target.y);
    };
}

inline ScriptedPolicy oracle_policy(Minigame game) {
    switch (game) {
        case Minigame::kBeacon: return beacon_oracle_policy();
        case Minigame::kShards: return shards_oracle_policy();
        case Minigame::kHunt:
            throw std::invalid_argument("hunt has no scripted oracle");
    }
    throw std::invalid_argument("unknown minigame");
}

// Uniform over available function ids; uniform pixel for spatial arguments.
inline ScriptedPolicy random_policy() {
    return [](const GridEnv& env, std::mt19937& rng) -> Action {
        const auto avail = env.available_actions();
        std::vector<int> ids;
        for (int i = 0; i < kNumFunctions; ++i)
            if (avail[static_cast<std::size_t>(i)]) ids.push_back(i);
        std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
        const int fn = ids[pick(rng)];
        if (!function_requires_spatial(fn)) return Action::non_spatial(fn);
        std::uniform_int_distribution<int> coord(0, env.resolution() - 1);
        const int x = coord(rng);
        const int y = coord(rng);
        return Action::at(fn, x, y);
    };
}

struct ScoreStats {
    double mean = 0.0;
    double stddev = 0.0;
    double max = 0.0;
    int episodes = 0;
    std::vector<double> scores;
};

inline ScoreStats summarize_scores(std::vector<double> scores) {
    ScoreStats s;
    s.scores = std::move(scores);
    s.episodes = static_cast<int>(s.scores.size());
    if (s.episodes == 0) return s;
    double sum = 0.0, sq = 0.0;
    for (double v : s.scores) {
        sum += v;
        sq += v * v;
        s.max = std::max(s.max, v);
    }
    s.mean = sum / s.episodes;
    s.stddev = std::sqrt(std::max(0.0, sq / s.episodes - s.mean * s.mean));
    return s;
}

// Runs a scripted policy for `episodes` full episodes; episode seeds are
// derived from `seed` so runs are reproducible and comparable across
// policies.
inline ScoreStats run_policy(const EnvConfig& cfg, const ScriptedPolicy& policy, int episodes,
                             std::uint64_t seed) {
    GridEnv env(cfg);
    std::mt19937 rng(static_cast<std::uint32_t>(mix_seed(seed, 0x7011c4)));
    std::vector<double> scores;
    scores.reserve(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
        env.reset(mix_seed(seed, static_cast<std::uint64_t>(e)));
        double score = 0.0;
        while (!env.done()) {
            const StepResult r = env.step(policy(env, rng));
            score = r.episode_score;
        }
        scores.push_back(score);
    }
    return summarize_scores(std::move(scores));
}

}  // namespace gridrl
