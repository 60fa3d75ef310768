#pragma once

#include <cmath>

#include "refinegan/core.hpp"

namespace refinegan {

/// Weight on the L1 term inside the combined segmentation loss.
/// lambda_l1 = 1 is the plain unweighted sum.
struct LossWeights {
    double lambda_l1 = 1.0;
};

namespace loss_detail {
template <typename S>
inline S clamp_prob(S p) {
    constexpr S lo = static_cast<S>(1e-7);
    constexpr S hi = static_cast<S>(1.0 - 1e-7);
    return p < lo ? lo : (p > hi ? hi : p);
}
}  // namespace loss_detail

/// Discriminator objective: mean over pixels of -log d_real - log(1 - d_fake).
template <typename S>
inline acc_t<S> d_loss(const Tensor<S>& d_real, const Tensor<S>& d_fake) {
    require_same_shape(d_real, d_fake, "d_loss");
    using A = acc_t<S>;
    A acc = 0;
    for (std::size_t i = 0; i < d_real.size(); ++i) {
        acc -= std::log(static_cast<A>(loss_detail::clamp_prob(d_real[i])));
        acc -= std::log(A(1) - static_cast<A>(loss_detail::clamp_prob(d_fake[i])));
    }
    return acc / static_cast<A>(d_real.size());
}

/// Non-saturating generator term: mean(-log d_fake).
template <typename S>
inline acc_t<S> g_adv_loss(const Tensor<S>& d_fake) {
    using A = acc_t<S>;
    A acc = 0;
    for (std::size_t i = 0; i < d_fake.size(); ++i)
        acc -= std::log(static_cast<A>(loss_detail::clamp_prob(d_fake[i])));
    return acc / static_cast<A>(d_fake.size());
}

/// Mean absolute elementwise difference.
template <typename S>
inline acc_t<S> l1_loss(const Tensor<S>& pred, const Tensor<S>& truth) {
    require_same_shape(pred, truth, "l1_loss");
    using A = acc_t<S>;
    A acc = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        acc += std::abs(static_cast<A>(pred[i]) - static_cast<A>(truth[i]));
    return acc / static_cast<A>(pred.size());
}

template <typename A>
inline A seg_loss(A adv, A l1, const LossWeights& w) {
    return adv + static_cast<A>(w.lambda_l1) * l1;
}

/// Per-pixel binary cross entropy against independent binary targets,
/// averaged over every element.
template <typename S>
inline acc_t<S> bce_loss(const Tensor<S>& pred, const Tensor<S>& target) {
    require_same_shape(pred, target, "bce_loss");
    using A = acc_t<S>;
    A acc = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const A p = static_cast<A>(loss_detail::clamp_prob(pred[i]));
        const A t = static_cast<A>(target[i]);
        acc -= t * std::log(p) + (A(1) - t) * std::log(A(1) - p);
    }
    return acc / static_cast<A>(pred.size());
}

// Gradients of the scalar losses with respect to their probability inputs.
// log arguments are clamped to [1e-7, 1-1e-7]; inside the clamp region the
// derivative is exact, outside it the loss is flat so the gradient is zero.

namespace loss_detail {
template <typename S>
inline bool in_clamp_range(S p) {
    return p > static_cast<S>(1e-7) && p < static_cast<S>(1.0 - 1e-7);
}
}  // namespace loss_detail

template <typename S>
inline void d_loss_grads(const Tensor<S>& d_real, const Tensor<S>& d_fake, Tensor<S>& g_real, Tensor<S>& g_fake) {
    require_same_shape(d_real, d_fake, "d_loss_grads");
    using A = acc_t<S>;
    g_real = Tensor<S>::like(d_real);
    g_fake = Tensor<S>::like(d_fake);
    const A inv_n = A(1) / static_cast<A>(d_real.size());
    for (std::size_t i = 0; i < d_real.size(); ++i) {
        g_real[i] = loss_detail::in_clamp_range(d_real[i])
                        ? static_cast<S>(-inv_n / static_cast<A>(d_real[i]))
                        : S(0);
        g_fake[i] = loss_detail::in_clamp_range(d_fake[i])
                        ? static_cast<S>(inv_n / (A(1) - static_cast<A>(d_fake[i])))
                        : S(0);
    }
}

template <typename S>
inline Tensor<S> g_adv_grad(const Tensor<S>& d_fake) {
    using A = acc_t<S>;
    Tensor<S> g = Tensor<S>::like(d_fake);
    const A inv_n = A(1) / static_cast<A>(d_fake.size());
    for (std::size_t i = 0; i < d_fake.size(); ++i)
        g[i] = loss_detail::in_clamp_range(d_fake[i])
                   ? static_cast<S>(-inv_n / static_cast<A>(d_fake[i]))
                   : S(0);
    return g;
}

/// Subgradient of mean absolute difference; zero where pred == truth.
template <typename S>
inline Tensor<S> l1_grad(const Tensor<S>& pred, const Tensor<S>& truth) {
    require_same_shape(pred, truth, "l1_grad");
    Tensor<S> g = Tensor<S>::like(pred);
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const S d = pred[i] - truth[i];
        g[i] = d > S(0) ? static_cast<S>(inv_n) : (d < S(0) ? static_cast<S>(-inv_n) : S(0));
    }
    return g;
}

template <typename S>
inline Tensor<S> bce_grad(const Tensor<S>& pred, const Tensor<S>& target) {
    require_same_shape(pred, target, "bce_grad");
    using A = acc_t<S>;
    Tensor<S> g = Tensor<S>::like(pred);
    const A inv_n = A(1) / static_cast<A>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!loss_detail::in_clamp_range(pred[i])) {
            g[i] = S(0);
            continue;
        }
        const A p = static_cast<A>(pred[i]);
        const A t = static_cast<A>(target[i]);
        g[i] = static_cast<S>(inv_n * (-t / p + (A(1) - t) / (A(1) - p)));
    }
    return g;
}

/// Pixels wrongly omitted from the region: clip(truth - pred, 0, 1).
template <typename S>
inline Tensor<S> fn_mask(const Tensor<S>& truth, const Tensor<S>& pred) {
    require_same_shape(truth, pred, "fn_mask");
    Tensor<S> out = Tensor<S>::like(truth);
    for (std::size_t i = 0; i < out.size(); ++i) {
        S v = truth[i] - pred[i];
        out[i] = v < S(0) ? S(0) : (v > S(1) ? S(1) : v);
    }
    return out;
}

/// Pixels wrongly included in the region: clip(pred - truth, 0, 1).
template <typename S>
inline Tensor<S> fp_mask(const Tensor<S>& truth, const Tensor<S>& pred) {
    require_same_shape(truth, pred, "fp_mask");
    Tensor<S> out = Tensor<S>::like(truth);
    for (std::size_t i = 0; i < out.size(); ++i) {
        S v = pred[i] - truth[i];
        out[i] = v < S(0) ? S(0) : (v > S(1) ? S(1) : v);
    }
    return out;
}

/// Final composition: clip(pred - fp + fn, 0, 1), per class. For binary
/// truth/pred this recovers the truth exactly.
template <typename S>
inline Tensor<S> compose(const Tensor<S>& pred, const Tensor<S>& fp, const Tensor<S>& fn) {
    require_same_shape(pred, fp, "compose");
    require_same_shape(pred, fn, "compose");
    Tensor<S> out = Tensor<S>::like(pred);
    for (std::size_t i = 0; i < out.size(); ++i) {
        S v = pred[i] - fp[i] + fn[i];
        out[i] = v < S(0) ? S(0) : (v > S(1) ? S(1) : v);
    }
    return out;
}

/// Composed per-class maps -> hard labels. C >= 2 takes the per-pixel
/// argmax (ties to the lowest class index); a single foreground map is
/// thresholded at 0.5.
template <typename S>
inline Tensor<std::uint8_t> finalize_labels(const Tensor<S>& composed) {
    const std::size_t c = composed.dim(3);
    if (c == 1) {
        Tensor<std::uint8_t> out(composed.dim(0), composed.dim(1), composed.dim(2), 1);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = composed[i] > S(0.5) ? 1 : 0;
        return out;
    }
    return argmax_labels(composed);
}

}  // namespace refinegan
