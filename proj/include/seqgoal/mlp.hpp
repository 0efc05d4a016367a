#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "seqgoal/rng.hpp"

namespace seqgoal {

enum class OutputActivation { kIdentity, kTanh };

// Dense ReLU stack with per-parameter Adam moments. Hidden layers are ReLU,
// the output layer is identity or tanh. All math is in doubles.
struct Mlp {
    std::vector<int> layer_sizes;  // input, hidden..., output
    std::vector<Eigen::MatrixXd> w;  // w[k]: layer_sizes[k+1] x layer_sizes[k]
    std::vector<Eigen::VectorXd> b;
    std::vector<Eigen::MatrixXd> adam_mw, adam_vw;
    std::vector<Eigen::VectorXd> adam_mb, adam_vb;
    std::int64_t adam_t = 0;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    int num_layers() const { return static_cast<int>(w.size()); }
};

struct GradientSet {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
};

inline Mlp make_mlp(const std::vector<int>& layer_sizes) {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("mlp needs at least input and output sizes");
    for (int s : layer_sizes)
        if (s <= 0) throw std::invalid_argument("mlp layer sizes must be positive");
    Mlp net;
    net.layer_sizes = layer_sizes;
    for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
        const int in = layer_sizes[k], out = layer_sizes[k + 1];
        net.w.push_back(Eigen::MatrixXd::Zero(out, in));
        net.b.push_back(Eigen::VectorXd::Zero(out));
        net.adam_mw.push_back(Eigen::MatrixXd::Zero(out, in));
        net.adam_vw.push_back(Eigen::MatrixXd::Zero(out, in));
        net.adam_mb.push_back(Eigen::VectorXd::Zero(out));
        net.adam_vb.push_back(Eigen::VectorXd::Zero(out));
    }
    return net;
}

// Fan-in uniform init, +-1/sqrt(fan_in) for weights and biases. When
// final_layer_scale > 0 the last layer instead draws from +-final_layer_scale,
// used to start actors near zero actions.
inline Mlp make_mlp_random(const std::vector<int>& layer_sizes, Rng& rng,
                           double final_layer_scale = 0.0) {
    Mlp net = make_mlp(layer_sizes);
    for (int k = 0; k < net.num_layers(); ++k) {
        const bool last = (k == net.num_layers() - 1);
        const double bound = (last && final_layer_scale > 0.0)
                                 ? final_layer_scale
                                 : 1.0 / std::sqrt(static_cast<double>(net.w[k].cols()));
        for (Eigen::Index j = 0; j < net.w[k].size(); ++j)
            net.w[k].data()[j] = rng.uniform(-bound, bound);
        for (Eigen::Index j = 0; j < net.b[k].size(); ++j)
            net.b[k][j] = rng.uniform(-bound, bound);
    }
    return net;
}

inline void apply_output_activation(Eigen::Ref<Eigen::MatrixXd> x, OutputActivation act) {
    if (act == OutputActivation::kTanh) x = x.array().tanh();
}

// Post-activation values per layer; act[0] is the input, act.back() the output.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> act;
};

inline const Eigen::MatrixXd& mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& input,
                                                OutputActivation out_act, ForwardCache& cache) {
    if (input.rows() != net.input_dim())
        throw std::invalid_argument("mlp_forward: input dimension mismatch");
    const int L = net.num_layers();
    cache.act.resize(L + 1);
    cache.act[0] = input;
    for (int k = 0; k < L; ++k) {
        Eigen::MatrixXd& out = cache.act[k + 1];
        out.noalias() = net.w[k] * cache.act[k];
        out.colwise() += net.b[k];
        if (k + 1 < L)
            out = out.cwiseMax(0.0);  // ReLU
        else
            apply_output_activation(out, out_act);
    }
    return cache.act.back();
}

inline Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& input,
                                   OutputActivation out_act) {
    ForwardCache cache;
    return mlp_forward_batch(net, input, out_act, cache);
}

inline void resize_like(GradientSet& g, const Mlp& net) {
    g.w.resize(net.num_layers());
    g.b.resize(net.num_layers());
    for (int k = 0; k < net.num_layers(); ++k) {
        g.w[k].resize(net.w[k].rows(), net.w[k].cols());
        g.b[k].resize(net.b[k].size());
    }
}

// Ping-pong delta buffers; passing one to mlp_backward_batch makes repeated
// updates allocation-free once warm.
struct BackwardWorkspace {
    std::vector<Eigen::MatrixXd> delta;  // delta[k]: gradient at layer k's output
};

// Reverse-mode gradients of sum(upstream .* output) w.r.t. every parameter.
// The cache must come from a forward pass of the same net and input batch.
// ReLU subgradient at 0 is 0. Optionally also yields gradients w.r.t. inputs.
inline void mlp_backward_batch(const Mlp& net, const ForwardCache& cache,
                               const Eigen::MatrixXd& upstream, OutputActivation out_act,
                               GradientSet& grads, BackwardWorkspace* ws = nullptr,
                               Eigen::MatrixXd* input_grad = nullptr) {
    const int L = net.num_layers();
    if (static_cast<int>(cache.act.size()) != L + 1)
        throw std::invalid_argument("mlp_backward: stale forward cache");
    if (upstream.rows() != net.output_dim() || upstream.cols() != cache.act[0].cols())
        throw std::invalid_argument("mlp_backward: upstream shape mismatch");
    resize_like(grads, net);
    BackwardWorkspace local;
    if (!ws) ws = &local;
    ws->delta.resize(L + 1);

    Eigen::MatrixXd& out_delta = ws->delta[L];
    out_delta = upstream;
    if (out_act == OutputActivation::kTanh)
        out_delta.array() *= 1.0 - cache.act[L].array().square();

    for (int k = L - 1; k >= 0; --k) {
        const Eigen::MatrixXd& delta = ws->delta[k + 1];
        grads.w[k].noalias() = delta * cache.act[k].transpose();
        grads.b[k].noalias() = delta.rowwise().sum();
        if (k == 0 && input_grad == nullptr) continue;
        Eigen::MatrixXd& next = ws->delta[k];
        next.resize(net.w[k].cols(), delta.cols());
        next.noalias() = net.w[k].transpose() * delta;
        if (k > 0) next.array() *= (cache.act[k].array() > 0.0).cast<double>();
    }
    if (input_grad) *input_grad = ws->delta[0];
}

inline GradientSet mlp_backward(const Mlp& net, const Eigen::VectorXd& input,
                                const Eigen::VectorXd& upstream, OutputActivation out_act,
                                Eigen::VectorXd* input_grad = nullptr) {
    ForwardCache cache;
    mlp_forward_batch(net, input, out_act, cache);
    GradientSet grads;
    Eigen::MatrixXd ig;
    mlp_backward_batch(net, cache, upstream, out_act, grads, nullptr, input_grad ? &ig : nullptr);
    if (input_grad) *input_grad = ig.col(0);
    return grads;
}

inline bool gradients_finite(const GradientSet& g) {
    for (const auto& m : g.w)
        if (!m.allFinite()) return false;
    for (const auto& v : g.b)
        if (!v.allFinite()) return false;
    return true;
}

// Standard Adam with bias correction. Non-finite gradients reject the whole
// step and leave the network untouched; callers decide how to report it.
inline bool adam_step(Mlp& net, const GradientSet& grads, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
    if (grads.w.size() != net.w.size() || grads.b.size() != net.b.size())
        throw std::invalid_argument("adam_step: gradient shape mismatch");
    for (std::size_t k = 0; k < net.w.size(); ++k)
        if (grads.w[k].rows() != net.w[k].rows() || grads.w[k].cols() != net.w[k].cols() ||
            grads.b[k].size() != net.b[k].size())
            throw std::invalid_argument("adam_step: gradient shape mismatch");
    if (!gradients_finite(grads)) return false;

    net.adam_t += 1;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(net.adam_t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(net.adam_t));
    const double scale = lr / c1;
    for (std::size_t k = 0; k < net.w.size(); ++k) {
        net.adam_mw[k] = beta1 * net.adam_mw[k] + (1.0 - beta1) * grads.w[k];
        net.adam_vw[k] = beta2 * net.adam_vw[k] + (1.0 - beta2) * grads.w[k].array().square().matrix();
        net.w[k].array() -=
            scale * net.adam_mw[k].array() / ((net.adam_vw[k].array() / c2).sqrt() + eps);
        net.adam_mb[k] = beta1 * net.adam_mb[k] + (1.0 - beta1) * grads.b[k];
        net.adam_vb[k] = beta2 * net.adam_vb[k] + (1.0 - beta2) * grads.b[k].array().square().matrix();
        net.b[k].array() -=
            scale * net.adam_mb[k].array() / ((net.adam_vb[k].array() / c2).sqrt() + eps);
    }
    return true;
}

// target <- (1 - tau) * target + tau * source, element-wise on weights and biases.
inline void polyak_update(Mlp& target, const Mlp& source, double tau) {
    if (target.layer_sizes != source.layer_sizes)
        throw std::invalid_argument("polyak_update: incongruent networks");
    for (std::size_t k = 0; k < target.w.size(); ++k) {
        target.w[k] = (1.0 - tau) * target.w[k] + tau * source.w[k];
        target.b[k] = (1.0 - tau) * target.b[k] + tau * source.b[k];
    }
}

// --- checkpoint io ----------------------------------------------------------
// Flat little-endian binary: magic, format version, layer sizes, then weights,
// biases and Adam state in declared layer order.

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_i64(std::ostream& os, std::int64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
inline std::int64_t get_i64(std::istream& is) {
    std::int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
inline void put_doubles(std::ostream& os, const double* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}
inline void get_doubles(std::istream& is, double* p, std::size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}
}  // namespace detail

inline constexpr std::uint32_t kMlpCheckpointVersion = 1;

inline void save_mlp(const Mlp& net, std::ostream& os) {
    os.write("SGNN", 4);
    detail::put_u32(os, kMlpCheckpointVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(net.layer_sizes.size()));
    for (int s : net.layer_sizes) detail::put_u32(os, static_cast<std::uint32_t>(s));
    detail::put_i64(os, net.adam_t);
    for (int k = 0; k < net.num_layers(); ++k) {
        detail::put_doubles(os, net.w[k].data(), net.w[k].size());
        detail::put_doubles(os, net.b[k].data(), net.b[k].size());
        detail::put_doubles(os, net.adam_mw[k].data(), net.adam_mw[k].size());
        detail::put_doubles(os, net.adam_vw[k].data(), net.adam_vw[k].size());
        detail::put_doubles(os, net.adam_mb[k].data(), net.adam_mb[k].size());
        detail::put_doubles(os, net.adam_vb[k].data(), net.adam_vb[k].size());
    }
}

inline Mlp load_mlp(std::istream& is) {
    char magic[4] = {};
    is.read(magic, 4);
    if (std::string_view(magic, 4) != "SGNN")
        throw std::runtime_error("checkpoint: bad magic");
    if (detail::get_u32(is) != kMlpCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version");
    const std::uint32_t n = detail::get_u32(is);
    std::vector<int> sizes(n);
    for (auto& s : sizes) s = static_cast<int>(detail::get_u32(is));
    Mlp net = make_mlp(sizes);
    net.adam_t = detail::get_i64(is);
    for (int k = 0; k < net.num_layers(); ++k) {
        detail::get_doubles(is, net.w[k].data(), net.w[k].size());
        detail::get_doubles(is, net.b[k].data(), net.b[k].size());
        detail::get_doubles(is, net.adam_mw[k].data(), net.adam_mw[k].size());
        detail::get_doubles(is, net.adam_vw[k].data(), net.adam_vw[k].size());
        detail::get_doubles(is, net.adam_mb[k].data(), net.adam_mb[k].size());
        detail::get_doubles(is, net.adam_vb[k].data(), net.adam_vb[k].size());
    }
    if (!is) throw std::runtime_error("checkpoint: truncated stream");
    return net;
}

}  // namespace seqgoal
