// Observation and action structure shared by the environments and the policy
// networks: spatial feature layers (screen + minimap), a flat feature vector,
// and a per-function availability mask over a global function registry. The
// registry is identical for every minigame so policy-head shapes stay
// transfer-compatible.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "gridrl/tensor.hpp"

namespace gridrl {

enum FunctionId : int {
    kNoOp = 0,
    kSelectAll = 1,
    kSelectUnit1 = 2,
    kSelectUnit2 = 3,
    kMoveScreen = 4,
    kAttackScreen = 5,
    kMoveCamera = 6,
};

inline constexpr int kNumFunctions = 7;

struct FunctionDef {
    std::string_view name;
    bool requires_spatial;
};

inline constexpr std::array<FunctionDef, kNumFunctions> kFunctionRegistry{{
    {"no_op", false},
    {"select_all", false},
    {"select_unit_1", false},
    {"select_unit_2", false},
    {"move_screen", true},
    {"attack_screen", true},
    {"move_camera", true},
}};

inline const std::array<FunctionDef, kNumFunctions>& registry() { return kFunctionRegistry; }

inline bool function_requires_spatial(int function_id) {
    detail::check(function_id >= 0 && function_id < kNumFunctions,
                  "function_id out of range");
    return kFunctionRegistry[static_cast<std::size_t>(function_id)].requires_spatial;
}

struct ObservationSpec {
    int screen_channels = 3;
    int minimap_channels = 2;
    int resolution = 16;  // N; observations are N x N
    int flat_dim = 2;
    int num_functions = kNumFunctions;

    bool operator==(const ObservationSpec&) const = default;
};

struct Observation {
    Tensor<float> screen;                  // [screen_channels, N, N], values in [0,1]
    Tensor<float> minimap;                 // [minimap_channels, N, N], values in [0,1]
    Tensor<float> flat;                    // [flat_dim]
    std::vector<std::uint8_t> available;   // [num_functions]
};

struct PixelCoord {
    int x = 0;
    int y = 0;
    bool operator==(const PixelCoord&) const = default;
};

// Composite action: a function identifier plus, when the registry marks the
// function as spatial, a pixel coordinate in [0,N)^2.
struct Action {
    int function_id = kNoOp;
    std::optional<PixelCoord> spatial;

    static Action non_spatial(int fn) { return Action{fn, std::nullopt}; }
    static Action at(int fn, int x, int y) { return Action{fn, PixelCoord{x, y}}; }
};

inline int pixel_index(const PixelCoord& p, int resolution) {
    return p.y * resolution + p.x;
}

}  // namespace gridrl
