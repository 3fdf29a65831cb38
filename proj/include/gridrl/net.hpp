// Policy/value networks. Three variants share one topology: screen and
// minimap branches of same-padding convolutions, a fully connected branch for
// the flat features broadcast across every pixel, a channel-wise
// concatenation into the state representation, and three heads:
//
//   value       scalar V(s), fully connected on the mean-pooled state
//   function    masked softmax over the global function registry
//   spatial     softmax over all N^2 pixels from a 1-channel 1x1 conv
//
//   baseline  branches 16ch 5x5 -> 32ch 3x3
//   plusfc    baseline branches plus a 128-unit FC before the value and
//             function outputs
//   plusconv  branches 32ch 5x5 -> 48ch 3x3 -> 16ch 3x3
//
// forward() fills a ForwardTrace with every intermediate activation;
// backward() consumes the trace plus head-level gradients and accumulates
// parameter gradients. Both are pure given (params, observation).
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gridrl/observation.hpp"
#include "gridrl/tensor.hpp"

namespace gridrl {

enum class Variant { kBaseline, kPlusFC, kPlusConv };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::kBaseline: return "baseline";
        case Variant::kPlusFC: return "plusfc";
        case Variant::kPlusConv: return "plusconv";
    }
    return "?";
}

inline Variant parse_variant(const std::string& name) {
    if (name == "baseline") return Variant::kBaseline;
    if (name == "plusfc") return Variant::kPlusFC;
    if (name == "plusconv") return Variant::kPlusConv;
    throw std::invalid_argument("unknown architecture variant: " + name);
}

struct ArchitectureSpec {
    Variant variant = Variant::kBaseline;
    ObservationSpec obs;

    bool operator==(const ArchitectureSpec&) const = default;
};

namespace net {

inline constexpr int kTrunkUnits = 256;   // shared FC read by value and fn heads
inline constexpr int kFlatUnits = 256;    // flat-branch FC
inline constexpr int kPlusFcUnits = 128;  // extra head FC in plusfc

struct ConvShape {
    int out_ch;
    int kernel;
};

inline std::vector<ConvShape> branch_layers(Variant v) {
    if (v == Variant::kPlusConv) return {{32, 5}, {48, 3}, {16, 3}};
    return {{16, 5}, {32, 3}};
}

inline int branch_out_channels(Variant v) {
    return branch_layers(v).back().out_ch;
}

inline int state_channels(Variant v) {
    return 2 * branch_out_channels(v) + kFlatUnits;
}

}  // namespace net

// ---------------------------------------------------------------------------
// Parameter layout and initialization
// ---------------------------------------------------------------------------

// Enumerates (name, shape) for every parameter of the architecture, in the
// canonical build/serialization order. Conv weights are [O,C,K,K]; FC weights
// are [M,D]; biases are vectors.
template <class Fn>
void for_each_parameter_shape(const ArchitectureSpec& arch, Fn&& fn) {
    auto conv = [&](const std::string& prefix, int out_ch, int in_ch, int k) {
        fn(prefix + ".weight", std::vector<int>{out_ch, in_ch, k, k});
        fn(prefix + ".bias", std::vector<int>{out_ch});
    };
    auto fc = [&](const std::string& prefix, int out_dim, int in_dim) {
        fn(prefix + ".weight", std::vector<int>{out_dim, in_dim});
        fn(prefix + ".bias", std::vector<int>{out_dim});
    };
    const auto layers = net::branch_layers(arch.variant);
    int in_ch = arch.obs.screen_channels;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        conv("screen.conv" + std::to_string(i + 1), layers[i].out_ch, in_ch, layers[i].kernel);
        in_ch = layers[i].out_ch;
    }
    in_ch = arch.obs.minimap_channels;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        conv("minimap.conv" + std::to_string(i + 1), layers[i].out_ch, in_ch, layers[i].kernel);
        in_ch = layers[i].out_ch;
    }
    fc("flat.fc", net::kFlatUnits, arch.obs.flat_dim);
    fc("trunk.fc", net::kTrunkUnits, net::state_channels(arch.variant));
    const bool plusfc = arch.variant == Variant::kPlusFC;
    if (plusfc) fc("value.hidden", net::kPlusFcUnits, net::kTrunkUnits);
    fc("value.out", 1, plusfc ? net::kPlusFcUnits : net::kTrunkUnits);
    if (plusfc) fc("fn.hidden", net::kPlusFcUnits, net::kTrunkUnits);
    fc("fn.out", arch.obs.num_functions, plusfc ? net::kPlusFcUnits : net::kTrunkUnits);
    conv("spatial.conv", 1, net::state_channels(arch.variant), 1);
}

// Fan-scaled uniform init (bound sqrt(6/(fan_in+fan_out))), zero biases,
// deterministic in init_seed.
template <class Real>
ParameterSet<Real> build_network(const ArchitectureSpec& arch, std::uint64_t init_seed) {
    ParameterSet<Real> params;
    std::mt19937 rng(static_cast<std::uint32_t>(init_seed));
    for_each_parameter_shape(arch, [&](const std::string& name, const std::vector<int>& shape) {
        Tensor<Real> t(shape);
        if (name.ends_with(".weight")) {
            int fan_in, fan_out;
            if (shape.size() == 4) {  // conv [O,C,K,K]
                fan_in = shape[1] * shape[2] * shape[3];
                fan_out = shape[0] * shape[2] * shape[3];
            } else {  // fc [M,D]
                fan_in = shape[1];
                fan_out = shape[0];
            }
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (Real& v : t.data) v = static_cast<Real>(dist(rng));
        }
        params.add(name, std::move(t));
    });
    return params;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

template <class Real>
struct NetworkOutputs {
    Real value = 0;
    std::vector<Real> fn_probs;       // availability-masked, exact 0 on masked ids
    std::vector<Real> spatial_probs;  // over N^2 pixels, row-major (y * N + x)
};

// Every intermediate of one forward pass. Reusable across calls: buffers are
// resized once and overwritten thereafter.
template <class Real>
struct ForwardTrace {
    Tensor<Real> screen_in, minimap_in;
    std::vector<Tensor<Real>> screen_acts, minimap_acts;  // post-relu conv outputs
    Tensor<Real> flat_in, flat_act;
    Tensor<Real> state_rep;  // [screen out | minimap out | broadcast flat]
    Tensor<Real> pooled;
    Tensor<Real> trunk_act;
    Tensor<Real> value_hidden, fn_hidden;  // plusfc only
    Tensor<Real> value_out;                // [1]
    Tensor<Real> fn_logits_t;              // [F]
    Tensor<Real> spatial_map;              // [1,N,N]

    Real value = 0;
    std::vector<Real> fn_probs, fn_logp;
    std::vector<Real> spatial_probs, spatial_logp;
    std::vector<std::uint8_t> mask;       // copy of obs.available
    std::vector<std::uint8_t> ones_mask;  // all-true mask for the spatial head

    NetworkOutputs<Real> outputs() const {
        return NetworkOutputs<Real>{value, fn_probs, spatial_probs};
    }
};

namespace net {

template <class Real, class Src>
void cast_into(Tensor<Real>& dst, const Tensor<Src>& src) {
    if (dst.shape != src.shape) dst.resize(src.shape);
    for (std::size_t i = 0; i < src.data.size(); ++i)
        dst.data[i] = static_cast<Real>(src.data[i]);
}

template <class Real>
void run_branch(const ParameterSet<Real>& params, const std::string& prefix,
                const std::vector<ConvShape>& layers, const Tensor<Real>& input,
                std::vector<Tensor<Real>>& acts) {
    acts.resize(layers.size());
    const Tensor<Real>* prev = &input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string name = prefix + ".conv" + std::to_string(i + 1);
        conv2d_forward(*prev, params.at(name + ".weight"), params.at(name + ".bias"), acts[i]);
        relu_inplace(acts[i]);
        prev = &acts[i];
    }
}

}  // namespace net

template <class Real>
void forward(const ArchitectureSpec& arch, const ParameterSet<Real>& params,
             const Observation& obs, ForwardTrace<Real>& trace) {
    const int n = arch.obs.resolution;
    const int npix = n * n;
    detail::check(obs.screen.shape ==
                      std::vector<int>{arch.obs.screen_channels, n, n},
                  "forward: screen shape does not match architecture spec");
    detail::check(obs.minimap.shape ==
                      std::vector<int>{arch.obs.minimap_channels, n, n},
                  "forward: minimap shape does not match architecture spec");
    detail::check(static_cast<int>(obs.flat.numel()) == arch.obs.flat_dim,
                  "forward: flat feature size does not match architecture spec");
    detail::check(static_cast<int>(obs.available.size()) == arch.obs.num_functions,
                  "forward: availability mask size does not match architecture spec");

    net::cast_into(trace.screen_in, obs.screen);
    net::cast_into(trace.minimap_in, obs.minimap);
    net::cast_into(trace.flat_in, obs.flat);
    trace.mask = obs.available;

    const auto layers = net::branch_layers(arch.variant);
    net::run_branch(params, "screen", layers, trace.screen_in, trace.screen_acts);
    net::run_branch(params, "minimap", layers, trace.minimap_in, trace.minimap_acts);

    fc_forward(trace.flat_in, params.at("flat.fc.weight"), params.at("flat.fc.bias"),
               trace.flat_act);
    relu_inplace(trace.flat_act);

    // state representation: [screen out | minimap out | flat broadcast]
    const int branch_ch = net::branch_out_channels(arch.variant);
    const int state_ch = net::state_channels(arch.variant);
    if (trace.state_rep.shape != std::vector<int>{state_ch, n, n})
        trace.state_rep.resize({state_ch, n, n});
    Real* rep = trace.state_rep.data.data();
    const auto& screen_top = trace.screen_acts.back();
    const auto& minimap_top = trace.minimap_acts.back();
    std::copy(screen_top.data.begin(), screen_top.data.end(), rep);
    std::copy(minimap_top.data.begin(), minimap_top.data.end(),
              rep + static_cast<std::size_t>(branch_ch) * npix);
    Real* flat_block = rep + static_cast<std::size_t>(2 * branch_ch) * npix;
    for (int c = 0; c < net::kFlatUnits; ++c)
        std::fill(flat_block + static_cast<std::size_t>(c) * npix,
                  flat_block + static_cast<std::size_t>(c + 1) * npix, trace.flat_act.data[c]);

    // mean pool per channel
    if (trace.pooled.shape != std::vector<int>{state_ch}) trace.pooled.resize({state_ch});
    const Real inv = Real(1) / static_cast<Real>(npix);
    for (int c = 0; c < state_ch; ++c) {
        const Real* plane = rep + static_cast<std::size_t>(c) * npix;
        Real acc = 0;
        for (int i = 0; i < npix; ++i) acc += plane[i];
        trace.pooled.data[c] = acc * inv;
    }

    fc_forward(trace.pooled, params.at("trunk.fc.weight"), params.at("trunk.fc.bias"),
               trace.trunk_act);
    relu_inplace(trace.trunk_act);

    const bool plusfc = arch.variant == Variant::kPlusFC;
    const Tensor<Real>* value_in = &trace.trunk_act;
    if (plusfc) {
        fc_forward(trace.trunk_act, params.at("value.hidden.weight"),
                   params.at("value.hidden.bias"), trace.value_hidden);
        relu_inplace(trace.value_hidden);
        value_in = &trace.value_hidden;
    }
    fc_forward(*value_in, params.at("value.out.weight"), params.at("value.out.bias"),
               trace.value_out);
    trace.value = trace.value_out.data[0];

    const Tensor<Real>* fn_in = &trace.trunk_act;
    if (plusfc) {
        fc_forward(trace.trunk_act, params.at("fn.hidden.weight"), params.at("fn.hidden.bias"),
                   trace.fn_hidden);
        relu_inplace(trace.fn_hidden);
        fn_in = &trace.fn_hidden;
    }
    fc_forward(*fn_in, params.at("fn.out.weight"), params.at("fn.out.bias"), trace.fn_logits_t);

    const int num_fn = arch.obs.num_functions;
    trace.fn_probs.resize(static_cast<std::size_t>(num_fn));
    trace.fn_logp.resize(static_cast<std::size_t>(num_fn));
    masked_softmax<Real>(trace.fn_logits_t.data.data(), trace.mask.data(), num_fn,
                         trace.fn_probs.data(), trace.fn_logp.data());

    conv2d_forward(trace.state_rep, params.at("spatial.conv.weight"),
                   params.at("spatial.conv.bias"), trace.spatial_map);
    trace.spatial_probs.resize(static_cast<std::size_t>(npix));
    trace.spatial_logp.resize(static_cast<std::size_t>(npix));
    trace.ones_mask.assign(static_cast<std::size_t>(npix), 1);
    masked_softmax<Real>(trace.spatial_map.data.data(), trace.ones_mask.data(), npix,
                         trace.spatial_probs.data(), trace.spatial_logp.data());

    if (!std::isfinite(static_cast<double>(trace.value)))
        throw std::runtime_error("forward: non-finite value output");
    for (int i = 0; i < num_fn; ++i)
        if (!std::isfinite(static_cast<double>(trace.fn_logits_t.data[i])))
            throw std::runtime_error("forward: non-finite function logits");
    for (int i = 0; i < npix; ++i)
        if (!std::isfinite(static_cast<double>(trace.spatial_map.data[i])))
            throw std::runtime_error("forward: non-finite spatial logits");
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

// Gradients of the loss w.r.t. the three head outputs. Masked function ids
// must carry zero gradient (losses are expressed in the logit domain, so this
// holds by construction for the softmax-based losses used here).
template <class Real>
struct HeadGradients {
    Real d_value = 0;
    std::vector<Real> d_fn_logits;
    std::vector<Real> d_spatial_logits;
};

template <class Real>
struct BackwardScratch {
    Tensor<Real> d_state_rep, d_pooled, d_trunk, d_trunk_z;
    Tensor<Real> d_value_hidden, d_fn_hidden, d_hidden_z;
    Tensor<Real> d_flat_z;
    Tensor<Real> d_value_t, d_fn_t, d_spatial_map;
    Tensor<Real> d_branch_top;
    std::vector<Tensor<Real>> d_screen_z, d_minimap_z;  // pre-relu grads per conv layer
};

namespace net {

template <class Real>
void zero_resize(Tensor<Real>& t, const std::vector<int>& shape) {
    if (t.shape != shape)
        t.resize(shape);
    else
        t.fill(Real(0));
}

// Backward through one conv branch given the gradient at its top (post-relu)
// activation in d_top.data. Observation inputs are leaves, so no input
// gradient is produced for the first layer.
template <class Real>
void branch_backward(ParameterSet<Real>& params, const std::string& prefix,
                     const std::vector<ConvShape>& layers, const Tensor<Real>& input,
                     const std::vector<Tensor<Real>>& acts, const Tensor<Real>& d_top,
                     std::vector<Tensor<Real>>& d_z) {
    const std::size_t L = layers.size();
    d_z.resize(L);
    for (std::size_t i = 0; i < L; ++i) zero_resize(d_z[i], acts[i].shape);
    relu_backward(acts.back(), d_top, d_z.back());
    for (int i = static_cast<int>(L) - 1; i >= 0; --i) {
        const std::string name = prefix + ".conv" + std::to_string(i + 1);
        const Tensor<Real>& layer_in = (i == 0) ? input : acts[static_cast<std::size_t>(i - 1)];
        Tensor<Real> d_prev;
        Tensor<Real>* d_in = nullptr;
        if (i > 0) {
            zero_resize(d_prev, layer_in.shape);
            d_in = &d_prev;
        }
        conv2d_backward(layer_in, params.at(name + ".weight"), params.at(name + ".bias"),
                        d_z[static_cast<std::size_t>(i)], d_in);
        if (i > 0)
            relu_backward(layer_in, d_prev, d_z[static_cast<std::size_t>(i - 1)]);
    }
}

}  // namespace net

// Accumulates d(loss)/d(param) into params' grad buffers for one forward
// trace and one set of head gradients. Callable repeatedly to sum gradients
// over a rollout.
template <class Real>
void backward(const ArchitectureSpec& arch, ParameterSet<Real>& params,
              const ForwardTrace<Real>& trace, const HeadGradients<Real>& head,
              BackwardScratch<Real>& ws) {
    const int n = arch.obs.resolution;
    const int npix = n * n;
    const int num_fn = arch.obs.num_functions;
    const int branch_ch = net::branch_out_channels(arch.variant);
    const int state_ch = net::state_channels(arch.variant);
    const bool plusfc = arch.variant == Variant::kPlusFC;
    detail::check(static_cast<int>(head.d_fn_logits.size()) == num_fn &&
                      static_cast<int>(head.d_spatial_logits.size()) == npix,
                  "backward: head gradient sizes");

    // spatial head: 1x1 conv on the state representation
    net::zero_resize(ws.d_state_rep, {state_ch, n, n});
    net::zero_resize(ws.d_spatial_map, {1, n, n});
    std::copy(head.d_spatial_logits.begin(), head.d_spatial_logits.end(),
              ws.d_spatial_map.data.begin());
    conv2d_backward(trace.state_rep, params.at("spatial.conv.weight"),
                    params.at("spatial.conv.bias"), ws.d_spatial_map, &ws.d_state_rep);

    // value and function heads into the shared trunk activation
    net::zero_resize(ws.d_trunk, {net::kTrunkUnits});
    net::zero_resize(ws.d_value_t, {1});
    ws.d_value_t.data[0] = head.d_value;
    if (plusfc) {
        net::zero_resize(ws.d_value_hidden, {net::kPlusFcUnits});
        fc_backward(trace.value_hidden, params.at("value.out.weight"),
                    params.at("value.out.bias"), ws.d_value_t, &ws.d_value_hidden);
        net::zero_resize(ws.d_hidden_z, {net::kPlusFcUnits});
        relu_backward(trace.value_hidden, ws.d_value_hidden, ws.d_hidden_z);
        fc_backward(trace.trunk_act, params.at("value.hidden.weight"),
                    params.at("value.hidden.bias"), ws.d_hidden_z, &ws.d_trunk);
    } else {
        fc_backward(trace.trunk_act, params.at("value.out.weight"),
                    params.at("value.out.bias"), ws.d_value_t, &ws.d_trunk);
    }

    net::zero_resize(ws.d_fn_t, {num_fn});
    std::copy(head.d_fn_logits.begin(), head.d_fn_logits.end(), ws.d_fn_t.data.begin());
    if (plusfc) {
        net::zero_resize(ws.d_fn_hidden, {net::kPlusFcUnits});
        fc_backward(trace.fn_hidden, params.at("fn.out.weight"), params.at("fn.out.bias"),
                    ws.d_fn_t, &ws.d_fn_hidden);
        net::zero_resize(ws.d_hidden_z, {net::kPlusFcUnits});
        relu_backward(trace.fn_hidden, ws.d_fn_hidden, ws.d_hidden_z);
        fc_backward(trace.trunk_act, params.at("fn.hidden.weight"), params.at("fn.hidden.bias"),
                    ws.d_hidden_z, &ws.d_trunk);
    } else {
        fc_backward(trace.trunk_act, params.at("fn.out.weight"), params.at("fn.out.bias"),
                    ws.d_fn_t, &ws.d_trunk);
    }

    // trunk fc over the mean-pooled state representation
    net::zero_resize(ws.d_trunk_z, {net::kTrunkUnits});
    relu_backward(trace.trunk_act, ws.d_trunk, ws.d_trunk_z);
    net::zero_resize(ws.d_pooled, {state_ch});
    fc_backward(trace.pooled, params.at("trunk.fc.weight"), params.at("trunk.fc.bias"),
                ws.d_trunk_z, &ws.d_pooled);

    // mean-pool backward: spread evenly over pixels
    const Real inv = Real(1) / static_cast<Real>(npix);
    for (int c = 0; c < state_ch; ++c) {
        Real* plane = ws.d_state_rep.data.data() + static_cast<std::size_t>(c) * npix;
        const Real g = ws.d_pooled.data[c] * inv;
        for (int i = 0; i < npix; ++i) plane[i] += g;
    }

    // split the state-representation gradient back into the three branches
    const auto layers = net::branch_layers(arch.variant);
    net::zero_resize(ws.d_branch_top, {branch_ch, n, n});
    std::copy(ws.d_state_rep.data.begin(),
              ws.d_state_rep.data.begin() + static_cast<std::size_t>(branch_ch) * npix,
              ws.d_branch_top.data.begin());
    net::branch_backward(params, "screen", layers, trace.screen_in, trace.screen_acts,
                         ws.d_branch_top, ws.d_screen_z);
    std::copy(ws.d_state_rep.data.begin() + static_cast<std::size_t>(branch_ch) * npix,
              ws.d_state_rep.data.begin() + static_cast<std::size_t>(2 * branch_ch) * npix,
              ws.d_branch_top.data.begin());
    net::branch_backward(params, "minimap", layers, trace.minimap_in, trace.minimap_acts,
                         ws.d_branch_top, ws.d_minimap_z);

    // flat branch: each unit was broadcast over npix pixels
    net::zero_resize(ws.d_flat_z, {net::kFlatUnits});
    const Real* flat_grad =
        ws.d_state_rep.data.data() + static_cast<std::size_t>(2 * branch_ch) * npix;
    for (int c = 0; c < net::kFlatUnits; ++c) {
        if (trace.flat_act.data[c] <= Real(0)) continue;  // relu gate
        const Real* plane = flat_grad + static_cast<std::size_t>(c) * npix;
        Real acc = 0;
        for (int i = 0; i < npix; ++i) acc += plane[i];
        ws.d_flat_z.data[c] = acc;
    }
    fc_backward(trace.flat_in, params.at("flat.fc.weight"), params.at("flat.fc.bias"),
                ws.d_flat_z, static_cast<Tensor<Real>*>(nullptr));
}

// ---------------------------------------------------------------------------
// Composite-action log probability and entropy
// ---------------------------------------------------------------------------

// log pi(a | s) = log p(function) + log p(pixel) when the function takes a
// spatial argument. Raises if the action's function id is masked out.
template <class Real>
Real log_prob(const ForwardTrace<Real>& trace, const Action& action, int resolution) {
    const auto fn = static_cast<std::size_t>(action.function_id);
    detail::check(fn < trace.mask.size(), "log_prob: function id out of range");
    if (!trace.mask[fn])
        throw std::domain_error("log_prob: action has zero probability (masked function id)");
    Real lp = trace.fn_logp[fn];
    if (function_requires_spatial(action.function_id)) {
        detail::check(action.spatial.has_value(), "log_prob: spatial argument missing");
        lp += trace.spatial_logp[static_cast<std::size_t>(
            pixel_index(*action.spatial, resolution))];
    }
    return lp;
}

// Entropy of the function head plus entropy of the spatial head, in nats.
template <class Real>
Real policy_entropy(const ForwardTrace<Real>& trace) {
    return entropy(trace.fn_probs.data(), static_cast<int>(trace.fn_probs.size())) +
           entropy(trace.spatial_probs.data(), static_cast<int>(trace.spatial_probs.size()));
}

}  // namespace gridrl
