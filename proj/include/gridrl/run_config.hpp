// Textual run configuration: key=value lines (with # comments) mapping onto
// the training, environment and experiment parameters. Unknown keys are
// rejected by name; the effective configuration is echoed into every run
// directory so a run is reproducible from its artifacts alone.
#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "gridrl/a3c.hpp"

namespace gridrl {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// CSV schemas (headers are stable across versions).
inline constexpr std::string_view kTrainLogHeader = "episode,worker,global_step,score,wallclock_ms";
inline constexpr std::string_view kEvalCsvHeader = "episode,score";
inline constexpr std::string_view kEvalPointsHeader = "episode,mean,std,max,global_step";
inline constexpr std::string_view kCompareCsvHeader = "variant,seed,best_score,episodes_to_threshold";
inline constexpr std::string_view kBaselinesCsvHeader = "policy,mean,std,max,episodes";

namespace cfg_detail {

inline double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw UsageError("config key '" + key + "': not a number: '" + value + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw UsageError("config key '" + key + "': not an integer: '" + value + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw UsageError("config key '" + key + "': not a boolean: '" + value + "'");
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace cfg_detail

struct RunConfig {
    std::string minigame;  // required for training commands
    std::string arch = "baseline";
    std::uint64_t seed = 0;
    std::string out;     // run directory; empty means derive from the run
    std::string source;  // transfer source checkpoint
    TrainConfig train;

    // Applies one key=value pair; rejects unknown keys by name.
    void set(const std::string& key, const std::string& value) {
        using namespace cfg_detail;
        if (key == "minigame") minigame = value;
        else if (key == "arch") arch = value;
        else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
        else if (key == "out") out = value;
        else if (key == "source") source = value;
        else if (key == "episodes") train.episodes = parse_int(key, value);
        else if (key == "workers") train.workers = static_cast<int>(parse_int(key, value));
        else if (key == "resolution") train.resolution = static_cast<int>(parse_int(key, value));
        else if (key == "learning_rate") train.learning_rate = parse_double(key, value);
        else if (key == "discount") train.discount = parse_double(key, value);
        else if (key == "t_max") train.t_max = static_cast<int>(parse_int(key, value));
        else if (key == "epsilon_start") train.epsilon_start = parse_double(key, value);
        else if (key == "epsilon_end") train.epsilon_end = parse_double(key, value);
        else if (key == "epsilon_fraction") train.epsilon_fraction = parse_double(key, value);
        else if (key == "entropy_coef") train.entropy_coef = parse_double(key, value);
        else if (key == "value_coef") train.value_coef = parse_double(key, value);
        else if (key == "grad_clip") train.grad_clip = parse_double(key, value);
        else if (key == "optimizer") train.optimizer = parse_optimizer_checked(value);
        else if (key == "eval_interval") train.eval_interval = static_cast<int>(parse_int(key, value));
        else if (key == "eval_episodes") train.eval_episodes = static_cast<int>(parse_int(key, value));
        else if (key == "stop_eval_mean") train.stop_eval_mean = parse_double(key, value);
        else if (key == "checkpoint_interval")
            train.checkpoint_interval = static_cast<int>(parse_int(key, value));
        else if (key == "episode_cap") train.episode_cap = static_cast<int>(parse_int(key, value));
        else if (key == "strict_locking") train.strict_locking = parse_bool(key, value);
        else throw UsageError("unknown config key: '" + key + "'");
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw UsageError("cannot open config file: " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            // trim
            const auto b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos) continue;
            const auto e = line.find_last_not_of(" \t\r");
            line = line.substr(b, e - b + 1);
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw UsageError("config file " + path + ": line " + std::to_string(lineno) +
                                 " is not key=value");
            auto trim = [](std::string s) {
                const auto bb = s.find_first_not_of(" \t");
                if (bb == std::string::npos) return std::string();
                const auto ee = s.find_last_not_of(" \t");
                return s.substr(bb, ee - bb + 1);
            };
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    // Full effective configuration, one key per line, fixed order.
    std::string echo() const {
        using cfg_detail::format_double;
        std::ostringstream out_s;
        out_s << "minigame=" << minigame << '\n'
              << "arch=" << arch << '\n'
              << "seed=" << seed << '\n'
              << "out=" << out << '\n'
              << "source=" << source << '\n'
              << "episodes=" << train.episodes << '\n'
              << "workers=" << train.workers << '\n'
              << "resolution=" << train.resolution << '\n'
              << "learning_rate=" << format_double(train.learning_rate) << '\n'
              << "discount=" << format_double(train.discount) << '\n'
              << "t_max=" << train.t_max << '\n'
              << "epsilon_start=" << format_double(train.epsilon_start) << '\n'
              << "epsilon_end=" << format_double(train.epsilon_end) << '\n'
              << "epsilon_fraction=" << format_double(train.epsilon_fraction) << '\n'
              << "entropy_coef=" << format_double(train.entropy_coef) << '\n'
              << "value_coef=" << format_double(train.value_coef) << '\n'
              << "grad_clip=" << format_double(train.grad_clip) << '\n'
              << "optimizer=" << optimizer_name(train.optimizer) << '\n'
              << "eval_interval=" << train.eval_interval << '\n'
              << "eval_episodes=" << train.eval_episodes << '\n'
              << "stop_eval_mean=" << format_double(train.stop_eval_mean) << '\n'
              << "checkpoint_interval=" << train.checkpoint_interval << '\n'
              << "episode_cap=" << train.episode_cap << '\n'
              << "strict_locking=" << (train.strict_locking ? "true" : "false") << '\n';
        return out_s.str();
    }

  private:
    static OptimizerKind parse_optimizer_checked(const std::string& value) {
        try {
            return parse_optimizer(value);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
};

}  // namespace gridrl
