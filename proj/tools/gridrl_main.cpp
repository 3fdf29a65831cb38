// gridrl command-line harness: training, evaluation, transfer and
// architecture-comparison experiments over the grid minigames. Every run
// directory is self-describing (config echo + CSV logs + checkpoints).
//
// Exit codes: 0 ok, 1 runtime error, 2 usage error, 3 incompatibility.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridrl/a3c.hpp"
#include "gridrl/checkpoint.hpp"
#include "gridrl/env.hpp"
#include "gridrl/run_config.hpp"

namespace fs = std::filesystem;
using namespace gridrl;

namespace {

constexpr double kHuntThreshold = 3.0;  // absolute score threshold (no oracle exists)

std::string fmt(double v) { return cfg_detail::format_double(v); }

// Options mirroring RunConfig keys; values are applied as raw strings so the
// config-file path and the flag path share one parser and one validator.
struct TrackedOptions {
    std::vector<std::pair<std::string, CLI::Option*>> opts;
    CLI::Option* config_opt = nullptr;

    void add_all(CLI::App* cmd) {
        config_opt = cmd->add_option("--config", "configuration file (key=value lines)");
        static const char* keys[] = {
            "minigame",      "arch",          "seed",           "out",
            "source",        "episodes",      "workers",        "resolution",
            "learning_rate", "discount",      "t_max",          "epsilon_start",
            "epsilon_end",   "epsilon_fraction", "entropy_coef", "value_coef",
            "grad_clip",     "optimizer",     "eval_interval",  "eval_episodes",
            "stop_eval_mean", "checkpoint_interval", "episode_cap", "strict_locking"};
        for (const char* key : keys)
            opts.emplace_back(key, cmd->add_option("--" + std::string(key)));
    }

    // defaults < config file < explicit flags
    RunConfig resolve() const {
        RunConfig cfg;
        if (config_opt && config_opt->count() > 0) cfg.load_file(config_opt->results()[0]);
        for (const auto& [key, opt] : opts)
            if (opt->count() > 0) cfg.set(key, opt->results()[0]);
        return cfg;
    }

    bool given(const std::string& key) const {
        for (const auto& [k, opt] : opts)
            if (k == key) return opt->count() > 0;
        return false;
    }
};

CheckpointMetadata make_metadata(const RunConfig& cfg, const ArchitectureSpec& arch,
                                 long long global_step, double mean_recent_score,
                                 long long episodes_done) {
    CheckpointMetadata meta;
    meta.arch = variant_name(arch.variant);
    meta.minigame = cfg.minigame;
    meta.obs = arch.obs;
    meta.global_step = global_step;
    meta.mean_recent_score = mean_recent_score;
    meta.rng_state = "seed=" + std::to_string(cfg.seed) +
                     ";episodes=" + std::to_string(episodes_done);
    return meta;
}

// Runs one training job into `dir`, streaming train_log.csv and
// eval_points.csv, retaining best/periodic/final checkpoints.
TrainResult run_training(const RunConfig& cfg, const fs::path& dir,
                         const ParameterSet<float>* initial,
                         const std::string& source_annotation) {
    fs::create_directories(dir);
    {
        std::ofstream echo(dir / "config.echo");
        echo << cfg.echo();
    }

    std::ofstream log(dir / "train_log.csv");
    log << kTrainLogHeader << '\n';
    if (!source_annotation.empty()) log << "# source=" << source_annotation << '\n';
    std::ofstream evals(dir / "eval_points.csv");
    evals << kEvalPointsHeader << '\n';

    TrainSetup setup;
    setup.game = parse_minigame(cfg.minigame);
    setup.variant = parse_variant(cfg.arch);
    setup.config = cfg.train;
    setup.seed = cfg.seed;
    setup.initial_params = initial;
    const ArchitectureSpec arch{setup.variant, observation_spec_for(cfg.train.resolution)};

    setup.hooks.on_episode = [&](const EpisodeRecord& r) {
        log << r.episode << ',' << r.worker << ',' << r.global_step << ',' << fmt(r.score) << ','
            << r.wallclock_ms << '\n';
        log.flush();
    };
    setup.hooks.on_eval = [&](const EvalPoint& p, const ParameterSet<float>& params,
                              bool is_best) {
        evals << p.episode << ',' << fmt(p.mean) << ',' << fmt(p.stddev) << ',' << fmt(p.max)
              << ',' << p.global_step << '\n';
        evals.flush();
        if (is_best)
            save_checkpoint(dir / "best.ckpt", params,
                            make_metadata(cfg, arch, p.global_step, p.mean, p.episode));
    };
    setup.hooks.on_checkpoint = [&](long long episode, const ParameterSet<float>& params) {
        char name[64];
        std::snprintf(name, sizeof(name), "ckpt_ep%06lld.ckpt", episode);
        save_checkpoint(dir / name, params, make_metadata(cfg, arch, 0, 0.0, episode));
    };

    TrainResult result = train(setup);
    save_checkpoint(dir / "final.ckpt", result.final_params,
                    make_metadata(cfg, arch, result.total_steps, result.recent_score_mean,
                                  result.episodes_completed));
    if (std::isnan(result.best_eval_mean))
        save_checkpoint(dir / "best.ckpt", result.best_params,
                        make_metadata(cfg, arch, result.total_steps, result.recent_score_mean,
                                      result.episodes_completed));
    return result;
}

void require_minigame(const RunConfig& cfg) {
    if (cfg.minigame.empty())
        throw UsageError("missing required option --minigame (beacon, shards or hunt)");
    parse_minigame(cfg.minigame);  // validates the name
}

fs::path default_run_dir(const RunConfig& cfg, const char* prefix) {
    return fs::path(prefix + ("_" + cfg.minigame) + "_" + cfg.arch + "_s" +
                    std::to_string(cfg.seed));
}

int cmd_train(const TrackedOptions& tracked) {
    RunConfig cfg = tracked.resolve();
    require_minigame(cfg);
    parse_variant(cfg.arch);
    const fs::path dir = cfg.out.empty() ? default_run_dir(cfg, "run") : fs::path(cfg.out);
    cfg.out = dir.string();
    const TrainResult result = run_training(cfg, dir, nullptr, "");
    std::cout << "trained " << result.episodes_completed << " episodes, " << result.total_steps
              << " environment steps\n";
    if (!std::isnan(result.best_eval_mean))
        std::cout << "best eval mean " << result.best_eval_mean << " at episode "
                  << result.best_eval_episode << '\n';
    std::cout << "run directory: " << dir.string() << '\n';
    return 0;
}

int cmd_transfer(const TrackedOptions& tracked) {
    RunConfig cfg = tracked.resolve();
    require_minigame(cfg);
    if (cfg.source.empty()) throw UsageError("missing required option --source <checkpoint>");
    const LoadedCheckpoint source = load_checkpoint(cfg.source);
    if (!tracked.given("arch")) cfg.arch = source.meta.arch;
    const ArchitectureSpec target_arch{parse_variant(cfg.arch),
                                       observation_spec_for(cfg.train.resolution)};
    const ParameterSet<float> initial =
        transfer_init(source, parse_minigame(cfg.minigame), target_arch);
    const fs::path dir = cfg.out.empty() ? default_run_dir(cfg, "transfer") : fs::path(cfg.out);
    cfg.out = dir.string();
    const TrainResult result = run_training(cfg, dir, &initial, cfg.source);
    std::cout << "transfer-trained " << result.episodes_completed << " episodes from "
              << cfg.source << '\n';
    if (!std::isnan(result.best_eval_mean))
        std::cout << "best eval mean " << result.best_eval_mean << " at episode "
                  << result.best_eval_episode << '\n';
    std::cout << "run directory: " << dir.string() << '\n';
    return 0;
}

int cmd_eval(const std::string& ckpt_path, std::string minigame, long long episodes,
             std::uint64_t seed, std::string out_path, bool force, int episode_cap) {
    if (episodes < 1) throw UsageError("--episodes must be >= 1");
    const LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
    if (minigame.empty()) minigame = loaded.meta.minigame;
    if (minigame != loaded.meta.minigame && !force)
        throw IncompatibleError("checkpoint was trained on '" + loaded.meta.minigame +
                                "' but evaluation requested '" + minigame +
                                "' (pass --force to override)");
    const ArchitectureSpec arch = loaded.meta.architecture();
    const ScoreStats stats = evaluate(arch, loaded.params, parse_minigame(minigame),
                                     static_cast<int>(episodes), seed, episode_cap);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open " + out_path + " for writing");
    out << kEvalCsvHeader << '\n';
    for (std::size_t i = 0; i < stats.scores.size(); ++i)
        out << i << ',' << fmt(stats.scores[i]) << '\n';
    std::cout << "minigame=" << minigame << " episodes=" << episodes << " mean=" << stats.mean
              << " std=" << stats.stddev << " max=" << stats.max << '\n';
    return 0;
}

double compare_threshold(const RunConfig& cfg) {
    const Minigame game = parse_minigame(cfg.minigame);
    if (game == Minigame::kHunt) return kHuntThreshold;
    const EnvConfig env_cfg{game, cfg.train.resolution, cfg.train.episode_cap};
    const ScoreStats oracle = run_policy(env_cfg, oracle_policy(game), 200, 9999);
    return 0.8 * oracle.mean;
}

int cmd_compare(const TrackedOptions& tracked, const std::vector<std::string>& variants,
                const std::vector<std::uint64_t>& seeds, long long budget) {
    RunConfig base = tracked.resolve();
    require_minigame(base);
    if (variants.size() < 2) throw UsageError("--arch must list at least two variants");
    for (const auto& v : variants) parse_variant(v);
    const std::vector<std::uint64_t> seed_list = seeds.empty() ? std::vector<std::uint64_t>{0}
                                                               : seeds;
    if (budget > 0) base.train.episodes = budget;
    const fs::path dir =
        base.out.empty() ? fs::path("compare_" + base.minigame) : fs::path(base.out);
    fs::create_directories(dir);
    const double threshold = compare_threshold(base);
    std::cout << "episodes-to-threshold target: " << threshold << '\n';

    std::ofstream csv(dir / "compare.csv");
    csv << kCompareCsvHeader << '\n';
    std::map<std::string, std::vector<double>> best_by_variant;
    for (const std::string& variant : variants) {
        for (std::uint64_t seed : seed_list) {
            RunConfig cfg = base;
            cfg.arch = variant;
            cfg.seed = seed;
            cfg.out = (dir / (variant + "_s" + std::to_string(seed))).string();
            const TrainResult result = run_training(cfg, cfg.out, nullptr, "");
            const double best =
                std::isnan(result.best_eval_mean) ? result.recent_score_mean
                                                  : result.best_eval_mean;
            const long long to_thresh = result.episodes_to_threshold(threshold);
            csv << variant << ',' << seed << ',' << fmt(best) << ',' << to_thresh << '\n';
            csv.flush();
            best_by_variant[variant].push_back(best);
            std::cout << variant << " seed " << seed << ": best " << best
                      << ", episodes-to-threshold " << to_thresh << '\n';
        }
    }

    // summary ranked by median best score
    std::vector<std::pair<double, std::string>> ranked;
    for (auto& [variant, scores] : best_by_variant) {
        std::sort(scores.begin(), scores.end());
        const double median = scores[scores.size() / 2];
        ranked.emplace_back(median, variant);
    }
    std::sort(ranked.rbegin(), ranked.rend());
    std::cout << "\nvariant ranking (median best score):\n";
    for (const auto& [median, variant] : ranked)
        std::cout << "  " << variant << "  " << median << '\n';
    return 0;
}

int cmd_baselines(const std::string& minigame, long long episodes, std::uint64_t seed,
                  const std::string& out_path, int resolution, int episode_cap) {
    if (episodes < 1) throw UsageError("--episodes must be >= 1");
    const Minigame game = parse_minigame(minigame);
    const EnvConfig cfg{game, resolution, episode_cap};
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open " + out_path + " for writing");
    out << kBaselinesCsvHeader << '\n';
    std::cout << kBaselinesCsvHeader << '\n';
    auto emit = [&](const char* name, const ScoreStats& s) {
        out << name << ',' << fmt(s.mean) << ',' << fmt(s.stddev) << ',' << fmt(s.max) << ','
            << s.episodes << '\n';
        std::cout << name << ',' << s.mean << ',' << s.stddev << ',' << s.max << ','
                  << s.episodes << '\n';
    };
    emit("random", run_policy(cfg, random_policy(), static_cast<int>(episodes), seed));
    if (game == Minigame::kHunt) {
        std::cout << "note: hunt has no scripted oracle (exploration-dependent); reporting "
                     "random only\n";
    } else {
        emit("oracle", run_policy(cfg, oracle_policy(game), static_cast<int>(episodes), seed));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridrl: asynchronous advantage actor-critic on grid minigames"};
    app.require_subcommand(1);

    auto* train_cmd = app.add_subcommand("train", "train a policy from scratch");
    TrackedOptions train_opts;
    train_opts.add_all(train_cmd);

    auto* transfer_cmd =
        app.add_subcommand("transfer", "train starting from another run's checkpoint");
    TrackedOptions transfer_opts;
    transfer_opts.add_all(transfer_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
    std::string eval_ckpt, eval_minigame, eval_out = "eval.csv";
    long long eval_episodes = 100;
    std::uint64_t eval_seed = 0;
    bool eval_force = false;
    int eval_cap = 120;
    eval_cmd->add_option("checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--minigame", eval_minigame);
    eval_cmd->add_option("--episodes", eval_episodes);
    eval_cmd->add_option("--seed", eval_seed);
    eval_cmd->add_option("--out", eval_out, "eval CSV path");
    eval_cmd->add_option("--episode_cap", eval_cap);
    eval_cmd->add_flag("--force", eval_force, "evaluate on a different minigame");

    auto* compare_cmd =
        app.add_subcommand("compare", "train several architectures and rank them");
    TrackedOptions compare_opts;
    compare_opts.add_all(compare_cmd);
    std::vector<std::string> compare_variants;
    std::vector<std::uint64_t> compare_seeds;
    long long compare_budget = 0;
    compare_cmd->add_option("--variants", compare_variants,
                            "architecture variants (two or more)");
    compare_cmd->add_option("--seeds", compare_seeds, "seeds to run per variant");
    compare_cmd->add_option("--budget", compare_budget, "episode budget per run");

    auto* baselines_cmd =
        app.add_subcommand("baselines", "random and oracle policy statistics");
    std::string bl_minigame, bl_out = "baselines.csv";
    long long bl_episodes = 1000;
    std::uint64_t bl_seed = 0;
    int bl_resolution = 16, bl_cap = 120;
    baselines_cmd->add_option("--minigame", bl_minigame)->required();
    baselines_cmd->add_option("--episodes", bl_episodes);
    baselines_cmd->add_option("--seed", bl_seed);
    baselines_cmd->add_option("--out", bl_out, "baselines CSV path");
    baselines_cmd->add_option("--resolution", bl_resolution);
    baselines_cmd->add_option("--episode_cap", bl_cap);

    try {
        app.parse(argc, argv);
        if (train_cmd->parsed()) return cmd_train(train_opts);
        if (transfer_cmd->parsed()) return cmd_transfer(transfer_opts);
        if (eval_cmd->parsed())
            return cmd_eval(eval_ckpt, eval_minigame, eval_episodes, eval_seed, eval_out,
                            eval_force, eval_cap);
        if (compare_cmd->parsed())
            return cmd_compare(compare_opts, compare_variants, compare_seeds, compare_budget);
        if (baselines_cmd->parsed())
            return cmd_baselines(bl_minigame, bl_episodes, bl_seed, bl_out, bl_resolution,
                                 bl_cap);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const IncompatibleError& e) {
        std::cerr << "incompatibility: " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
