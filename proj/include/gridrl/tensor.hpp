// Dense tensor math with hand-written reverse-mode gradients for the layer
// types used by the policy networks: 2-d same-padding convolution, fully
// connected layers, ReLU and masked softmax. Everything is templated on the
// scalar type: float is the training path, double is the evaluation path used
// for finite-difference gradient checking.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace gridrl {

namespace detail {
inline void check(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}
}  // namespace detail

template <class Real>
struct Tensor {
    std::vector<int> shape;
    std::vector<Real> data;
    std::vector<Real> grad;  // same size as data, zero-initialized

    Tensor() = default;
    explicit Tensor(std::vector<int> s) { resize(std::move(s)); }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    void resize(std::vector<int> s) {
        for (int d : s) detail::check(d > 0, "Tensor: dimensions must be positive");
        shape = std::move(s);
        const std::size_t n = static_cast<std::size_t>(numel_of(shape));
        data.assign(n, Real(0));
        grad.assign(n, Real(0));
    }

    static long long numel_of(const std::vector<int>& s) {
        long long n = 1;
        for (int d : s) n *= d;
        return n;
    }

    long long numel() const { return static_cast<long long>(data.size()); }

    void zero_grad() { std::fill(grad.begin(), grad.end(), Real(0)); }
    void fill(Real v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    template <class R2>
    Tensor<R2> cast() const {
        Tensor<R2> out;
        out.shape = shape;
        out.data.resize(data.size());
        out.grad.assign(grad.size(), R2(0));
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<R2>(data[i]);
        return out;
    }
};

template <class Real>
bool all_finite(const Tensor<Real>& t) {
    for (Real v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

template <class Real>
struct Parameter {
    std::string name;
    Tensor<Real> tensor;
};

// Ordered, uniquely named collection of tensors. The order is the canonical
// serialization and update order; the name determines the tensor's role.
template <class Real>
class ParameterSet {
  public:
    Tensor<Real>& add(std::string name, Tensor<Real> t) {
        detail::check(find(name) == nullptr, "ParameterSet: duplicate name " + name);
        items_.push_back(Parameter<Real>{std::move(name), std::move(t)});
        return items_.back().tensor;
    }

    Tensor<Real>* find(std::string_view name) {
        for (auto& p : items_)
            if (p.name == name) return &p.tensor;
        return nullptr;
    }
    const Tensor<Real>* find(std::string_view name) const {
        return const_cast<ParameterSet*>(this)->find(name);
    }

    Tensor<Real>& at(std::string_view name) {
        Tensor<Real>* t = find(name);
        detail::check(t != nullptr, "ParameterSet: no parameter named " + std::string(name));
        return *t;
    }
    const Tensor<Real>& at(std::string_view name) const {
        return const_cast<ParameterSet*>(this)->at(name);
    }

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    Parameter<Real>& operator[](std::size_t i) { return items_[i]; }
    const Parameter<Real>& operator[](std::size_t i) const { return items_[i]; }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    long long total_scalars() const {
        long long n = 0;
        for (const auto& p : items_) n += p.tensor.numel();
        return n;
    }

    void zero_grads() {
        for (auto& p : items_) p.tensor.zero_grad();
    }

    // Copies values (not gradients) from a structurally identical set.
    void load_values(const ParameterSet& src) {
        detail::check(src.size() == size(), "ParameterSet: structure mismatch in load_values");
        for (std::size_t i = 0; i < items_.size(); ++i) {
            detail::check(items_[i].name == src.items_[i].name &&
                              items_[i].tensor.same_shape(src.items_[i].tensor),
                          "ParameterSet: structure mismatch at " + items_[i].name);
            items_[i].tensor.data = src.items_[i].tensor.data;
        }
    }

    template <class R2>
    ParameterSet<R2> cast() const {
        ParameterSet<R2> out;
        for (const auto& p : items_) out.add(p.name, p.tensor.template cast<R2>());
        return out;
    }

  private:
    std::vector<Parameter<Real>> items_;
};

// --------------------------------------------------------------------------
// conv2d: stride-1 cross-correlation with zero same-padding. K must be odd so
// the output spatial size equals the input spatial size.
// input [C,H,W], weight [O,C,K,K], bias [O] -> out [O,H,W]
// --------------------------------------------------------------------------

template <class Real>
void conv2d_forward(const Tensor<Real>& input, const Tensor<Real>& weight,
                    const Tensor<Real>& bias, Tensor<Real>& out) {
    detail::check(input.shape.size() == 3, "conv2d: input must be [C,H,W]");
    detail::check(weight.shape.size() == 4, "conv2d: weight must be [O,C,K,K]");
    const int C = input.shape[0], H = input.shape[1], W = input.shape[2];
    const int O = weight.shape[0], K = weight.shape[2];
    detail::check(weight.shape[1] == C, "conv2d: input channels do not match weight channels");
    detail::check(weight.shape[3] == K && (K % 2) == 1, "conv2d: kernel must be square with odd K");
    detail::check(bias.shape == std::vector<int>{O}, "conv2d: bias must be [O]");
    if (out.shape != std::vector<int>{O, H, W}) out.resize({O, H, W});

    const int pad = K / 2;
    for (int o = 0; o < O; ++o) {
        Real* outp = out.data.data() + static_cast<std::size_t>(o) * H * W;
        std::fill(outp, outp + static_cast<std::size_t>(H) * W, bias.data[o]);
    }
    for (int o = 0; o < O; ++o) {
        Real* outplane = out.data.data() + static_cast<std::size_t>(o) * H * W;
        for (int c = 0; c < C; ++c) {
            const Real* inplane = input.data.data() + static_cast<std::size_t>(c) * H * W;
            const Real* wbase = weight.data.data() +
                                (static_cast<std::size_t>(o) * C + c) * K * K;
            for (int ky = 0; ky < K; ++ky) {
                const int y0 = std::max(0, pad - ky);
                const int y1 = std::min(H, H + pad - ky);
                for (int kx = 0; kx < K; ++kx) {
                    const Real w = wbase[ky * K + kx];
                    if (w == Real(0)) continue;
                    const int x0 = std::max(0, pad - kx);
                    const int x1 = std::min(W, W + pad - kx);
                    for (int y = y0; y < y1; ++y) {
                        Real* orow = outplane + static_cast<std::size_t>(y) * W;
                        const Real* irow = inplane + static_cast<std::size_t>(y + ky - pad) * W + (kx - pad);
                        for (int x = x0; x < x1; ++x) orow[x] += w * irow[x];
                    }
                }
            }
        }
    }
}

// Backward convention used throughout: parameter tensors (weight, bias)
// accumulate into their own .grad buffers; activation gradients travel in the
// .data of plain scratch tensors. input_grad may be null when the upstream
// does not need it (first layer).
template <class Real>
void conv2d_backward(const Tensor<Real>& input, Tensor<Real>& weight, Tensor<Real>& bias,
                     const Tensor<Real>& out_grad, Tensor<Real>* input_grad) {
    const int C = input.shape[0], H = input.shape[1], W = input.shape[2];
    const int O = weight.shape[0], K = weight.shape[2];
    const int pad = K / 2;
    detail::check(out_grad.shape == std::vector<int>{O, H, W}, "conv2d backward: out_grad shape");

    for (int o = 0; o < O; ++o) {
        const Real* gplane = out_grad.data.data() + static_cast<std::size_t>(o) * H * W;
        Real acc = 0;
        for (long long i = 0; i < static_cast<long long>(H) * W; ++i) acc += gplane[i];
        bias.grad[o] += acc;
        for (int c = 0; c < C; ++c) {
            const Real* inplane = input.data.data() + static_cast<std::size_t>(c) * H * W;
            Real* wgbase = weight.grad.data() + (static_cast<std::size_t>(o) * C + c) * K * K;
            Real* igplane = input_grad
                                ? input_grad->data.data() + static_cast<std::size_t>(c) * H * W
                                : nullptr;
            const Real* wbase = weight.data.data() + (static_cast<std::size_t>(o) * C + c) * K * K;
            for (int ky = 0; ky < K; ++ky) {
                const int y0 = std::max(0, pad - ky);
                const int y1 = std::min(H, H + pad - ky);
                for (int kx = 0; kx < K; ++kx) {
                    const int x0 = std::max(0, pad - kx);
                    const int x1 = std::min(W, W + pad - kx);
                    Real wg = 0;
                    const Real w = wbase[ky * K + kx];
                    for (int y = y0; y < y1; ++y) {
                        const Real* grow = gplane + static_cast<std::size_t>(y) * W;
                        const Real* irow = inplane + static_cast<std::size_t>(y + ky - pad) * W + (kx - pad);
                        Real dot = 0;
                        for (int x = x0; x < x1; ++x) dot += grow[x] * irow[x];
                        wg += dot;
                        if (igplane) {
                            Real* igrow = igplane + static_cast<std::size_t>(y + ky - pad) * W + (kx - pad);
                            for (int x = x0; x < x1; ++x) igrow[x] += w * grow[x];
                        }
                    }
                    wgbase[ky * K + kx] += wg;
                }
            }
        }
    }
}

// --------------------------------------------------------------------------
// fully_connected: out = weight * input + bias.
// input [D], weight [M,D], bias [M] -> out [M]
// --------------------------------------------------------------------------

template <class Real>
void fc_forward(const Tensor<Real>& input, const Tensor<Real>& weight,
                const Tensor<Real>& bias, Tensor<Real>& out) {
    detail::check(input.shape.size() >= 1 && weight.shape.size() == 2,
                  "fc: input must be a vector, weight [M,D]");
    const int D = static_cast<int>(input.numel());
    const int M = weight.shape[0];
    detail::check(weight.shape[1] == D, "fc: weight columns do not match input size");
    detail::check(bias.shape == std::vector<int>{M}, "fc: bias must be [M]");
    if (out.shape != std::vector<int>{M}) out.resize({M});

    const Real* in = input.data.data();
    for (int m = 0; m < M; ++m) {
        const Real* wrow = weight.data.data() + static_cast<std::size_t>(m) * D;
        Real acc = bias.data[m];
        for (int d = 0; d < D; ++d) acc += wrow[d] * in[d];
        out.data[m] = acc;
    }
}

template <class Real>
void fc_backward(const Tensor<Real>& input, Tensor<Real>& weight, Tensor<Real>& bias,
                 const Tensor<Real>& out_grad, Tensor<Real>* input_grad) {
    const int D = static_cast<int>(input.numel());
    const int M = weight.shape[0];
    detail::check(static_cast<int>(out_grad.numel()) == M, "fc backward: out_grad size");
    const Real* in = input.data.data();
    for (int m = 0; m < M; ++m) {
        const Real g = out_grad.data[m];
        bias.grad[m] += g;
        Real* wgrow = weight.grad.data() + static_cast<std::size_t>(m) * D;
        for (int d = 0; d < D; ++d) wgrow[d] += g * in[d];
        if (input_grad) {
            const Real* wrow = weight.data.data() + static_cast<std::size_t>(m) * D;
            Real* ig = input_grad->data.data();
            for (int d = 0; d < D; ++d) ig[d] += g * wrow[d];
        }
    }
}

// --------------------------------------------------------------------------
// relu
// --------------------------------------------------------------------------

template <class Real>
void relu_forward(const Tensor<Real>& input, Tensor<Real>& out) {
    if (out.shape != input.shape) out.resize(input.shape);
    for (std::size_t i = 0; i < input.data.size(); ++i)
        out.data[i] = input.data[i] > Real(0) ? input.data[i] : Real(0);
}

// In-place variant used inside the network trace; relu(x) > 0 iff x > 0, so
// the gate can be recovered from the activated output alone.
template <class Real>
void relu_inplace(Tensor<Real>& t) {
    for (Real& v : t.data)
        if (v < Real(0)) v = Real(0);
}

// d_in += d_out gated by (activated_out > 0)
template <class Real>
void relu_backward(const Tensor<Real>& activated_out, const Tensor<Real>& out_grad,
                   Tensor<Real>& input_grad) {
    detail::check(activated_out.shape == out_grad.shape && out_grad.shape == input_grad.shape,
                  "relu backward: shape mismatch");
    for (std::size_t i = 0; i < out_grad.data.size(); ++i)
        if (activated_out.data[i] > Real(0)) input_grad.data[i] += out_grad.data[i];
}

// --------------------------------------------------------------------------
// masked softmax. Masked-out entries get probability exactly 0; the rest are
// a numerically stable softmax (max subtraction) over their logits.
// Log-probabilities are computed as logit - logsumexp, never log(softmax).
// --------------------------------------------------------------------------

template <class Real>
void masked_softmax(const Real* logits, const std::uint8_t* mask, int n, Real* probs_out,
                    Real* logp_out = nullptr) {
    Real maxv = -std::numeric_limits<Real>::infinity();
    int legal = 0;
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        ++legal;
        maxv = std::max(maxv, logits[i]);
    }
    detail::check(legal > 0, "masked_softmax: no legal entry in mask");
    Real sum = 0;
    for (int i = 0; i < n; ++i) {
        if (mask[i]) {
            probs_out[i] = std::exp(logits[i] - maxv);
            sum += probs_out[i];
        } else {
            probs_out[i] = Real(0);
        }
    }
    const Real logsum = std::log(sum);
    for (int i = 0; i < n; ++i) {
        if (mask[i]) {
            probs_out[i] /= sum;
            if (logp_out) logp_out[i] = logits[i] - maxv - logsum;
        } else if (logp_out) {
            logp_out[i] = -std::numeric_limits<Real>::infinity();
        }
    }
}

template <class Real>
std::vector<Real> masked_softmax(const std::vector<Real>& logits,
                                 const std::vector<std::uint8_t>& mask) {
    detail::check(logits.size() == mask.size(), "masked_softmax: size mismatch");
    std::vector<Real> probs(logits.size());
    masked_softmax<Real>(logits.data(), mask.data(), static_cast<int>(logits.size()),
                         probs.data());
    return probs;
}

// Jacobian-vector product of the masked softmax:
// d_logits[j] += p_j * (d_probs[j] - sum_k p_k d_probs[k]) over unmasked j.
template <class Real>
void masked_softmax_backward(const Real* probs, const std::uint8_t* mask, int n,
                             const Real* d_probs, Real* d_logits_accum) {
    Real inner = 0;
    for (int i = 0; i < n; ++i)
        if (mask[i]) inner += probs[i] * d_probs[i];
    for (int i = 0; i < n; ++i)
        if (mask[i]) d_logits_accum[i] += probs[i] * (d_probs[i] - inner);
}

// Entropy of a (possibly masked) probability vector, in nats. Entries with
// probability 0 contribute nothing.
template <class Real>
Real entropy(const Real* probs, int n) {
    Real h = 0;
    for (int i = 0; i < n; ++i)
        if (probs[i] > Real(0)) h -= probs[i] * std::log(probs[i]);
    return h;
}

// dH/dlogit_j = -p_j (log p_j + H); accumulated scaled by `scale`.
template <class Real>
void entropy_backward(const Real* probs, const std::uint8_t* mask, int n, Real scale,
                      Real* d_logits_accum) {
    const Real h = entropy(probs, n);
    for (int i = 0; i < n; ++i) {
        if (!mask[i] || probs[i] <= Real(0)) continue;
        d_logits_accum[i] += scale * (-probs[i] * (std::log(probs[i]) + h));
    }
}

// --------------------------------------------------------------------------
// Finite-difference gradient check. The caller evaluates the loss in the
// 64-bit path and fills the analytic gradients into params' grad buffers
// before calling; this routine perturbs each checked coordinate by +/- eps
// and compares the central difference against the stored analytic value.
// Returns the max over checked coordinates of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// --------------------------------------------------------------------------

struct GradCheckOptions {
    double epsilon = 1e-4;
    // 0 means check every scalar; otherwise tensors larger than the cap are
    // checked on a seeded random sample of coordinates.
    int max_coords_per_tensor = 0;
    unsigned seed = 0;
    int threads = 1;
    // ReLU kinks make the plain central difference unreliable at isolated
    // coordinates: a perturbation can flip an activation's sign, which breaks
    // the O(eps^2) error model while the analytic one-sided derivative stays
    // exact. Each coordinate is therefore also evaluated at shrinking steps
    // and the best-agreeing scale is kept; a genuinely wrong gradient
    // disagrees at every scale.
    int refinements = 2;  // extra scales, each epsilon/4 of the previous
};

template <class LossFn>
double gradient_check(const LossFn& loss, const ParameterSet<double>& params,
                      const GradCheckOptions& opts = {}) {
    struct Coord {
        std::size_t tensor;
        std::size_t index;
        double analytic;
    };
    std::vector<Coord> coords;
    std::mt19937 rng(opts.seed);
    for (std::size_t t = 0; t < params.size(); ++t) {
        const auto& tensor = params[t].tensor;
        const std::size_t n = tensor.data.size();
        if (opts.max_coords_per_tensor <= 0 ||
            n <= static_cast<std::size_t>(opts.max_coords_per_tensor)) {
            for (std::size_t i = 0; i < n; ++i)
                coords.push_back({t, i, tensor.grad[i]});
        } else {
            std::vector<std::size_t> pick(n);
            std::iota(pick.begin(), pick.end(), std::size_t{0});
            for (int k = 0; k < opts.max_coords_per_tensor; ++k) {
                std::uniform_int_distribution<std::size_t> dist(k, n - 1);
                std::swap(pick[k], pick[dist(rng)]);
                coords.push_back({t, pick[k], tensor.grad[pick[k]]});
            }
        }
    }

    const int nthreads = std::max(1, opts.threads);
    std::vector<double> worst(nthreads, 0.0);
    auto run_range = [&](int tid, std::size_t begin, std::size_t end) {
        ParameterSet<double> local = params;  // private copy; loss must be pure
        for (std::size_t ci = begin; ci < end; ++ci) {
            const Coord& c = coords[ci];
            double& slot = local[c.tensor].tensor.data[c.index];
            const double saved = slot;
            double best = std::numeric_limits<double>::infinity();
            double eps = opts.epsilon;
            for (int scale = 0; scale <= opts.refinements; ++scale, eps *= 0.25) {
                slot = saved + eps;
                const double fp = loss(local);
                slot = saved - eps;
                const double fm = loss(local);
                slot = saved;
                if (!std::isfinite(fp) || !std::isfinite(fm))
                    throw std::runtime_error("gradient_check: non-finite loss");
                const double numeric = (fp - fm) / (2.0 * eps);
                const double denom = std::max({std::fabs(c.analytic), std::fabs(numeric), 1e-8});
                best = std::min(best, std::fabs(c.analytic - numeric) / denom);
            }
            worst[tid] = std::max(worst[tid], best);
        }
    };
    if (nthreads == 1) {
        run_range(0, 0, coords.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (coords.size() + nthreads - 1) / nthreads;
        for (int t = 0; t < nthreads; ++t) {
            const std::size_t b = std::min(coords.size(), chunk * t);
            const std::size_t e = std::min(coords.size(), b + chunk);
            pool.emplace_back(run_range, t, b, e);
        }
        for (auto& th : pool) th.join();
    }
    return *std::max_element(worst.begin(), worst.end());
}

}  // namespace gridrl
