#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "refinegan/common.hpp"
#include "refinegan/pbn.hpp"
#include "refinegan/tensor.hpp"

namespace refinegan {

/// View of one trainable tensor and its gradient accumulator. Collected in
/// declaration order; the order defines the checkpoint layout and the
/// optimizer state indexing.
template <typename S>
struct ParamRef {
    S* value = nullptr;
    S* grad = nullptr;
    std::size_t count = 0;
    std::string name;
};

namespace layer_detail {

template <typename S>
inline void glorot_fill(Rng& rng, std::vector<S>& w, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w) v = static_cast<S>(rand_uniform(rng, -limit, limit));
}

/// TF-SAME geometry: output size ceil(in/stride), asymmetric padding with
/// the smaller share in front.
struct SamePad {
    std::size_t out = 0;
    long before = 0;
};

inline SamePad same_pad(std::size_t in, std::size_t kernel, std::size_t stride) {
    SamePad p;
    p.out = (in + stride - 1) / stride;
    const long total = std::max<long>(static_cast<long>((p.out - 1) * stride + kernel) - static_cast<long>(in), 0);
    p.before = total / 2;
    return p;
}

}  // namespace layer_detail

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename S>
class Conv2D {
  public:
    Conv2D(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout, std::size_t stride,
           std::string name)
        : kh_(kh), kw_(kw), cin_(cin), cout_(cout), stride_(stride), name_(std::move(name)),
          w_(kh * kw * cin * cout), dw_(w_.size()), b_(cout), db_(cout) {}

    void init(Rng& rng) {
        layer_detail::glorot_fill(rng, w_, kh_ * kw_ * cin_, kh_ * kw_ * cout_);
        std::fill(b_.begin(), b_.end(), S(0));
    }

    /// Everything zero, including biases: with a sigmoid head this pins the
    /// output at one half.
    void init_zero() {
        std::fill(w_.begin(), w_.end(), S(0));
        std::fill(b_.begin(), b_.end(), S(0));
    }

    Tensor<S> forward(const Tensor<S>& x) const {
        if (x.dim(3) != cin_) throw DataError(name_ + ": expected " + std::to_string(cin_) + " input channels");
        const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
        const auto ph = layer_detail::same_pad(h, kh_, stride_);
        const auto pw = layer_detail::same_pad(w, kw_, stride_);
        Tensor<S> y(n, ph.out, pw.out, cout_);
        parallel_for(n, [&](std::size_t n0, std::size_t n1) {
            std::vector<acc_t<S>> acc(cout_);
            for (std::size_t b = n0; b < n1; ++b)
                for (std::size_t oi = 0; oi < ph.out; ++oi)
                    for (std::size_t oj = 0; oj < pw.out; ++oj) {
                        for (std::size_t co = 0; co < cout_; ++co) acc[co] = static_cast<acc_t<S>>(b_[co]);
                        for (std::size_t di = 0; di < kh_; ++di) {
                            const long ii = static_cast<long>(oi * stride_ + di) - ph.before;
                            if (ii < 0 || ii >= static_cast<long>(h)) continue;
                            for (std::size_t dj = 0; dj < kw_; ++dj) {
                                const long jj = static_cast<long>(oj * stride_ + dj) - pw.before;
                                if (jj < 0 || jj >= static_cast<long>(w)) continue;
                                const S* xp = &x(b, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0);
                                const S* wp = &w_[((di * kw_ + dj) * cin_) * cout_];
                                for (std::size_t ci = 0; ci < cin_; ++ci) {
                                    const acc_t<S> xv = static_cast<acc_t<S>>(xp[ci]);
                                    const S* wrow = wp + ci * cout_;
                                    for (std::size_t co = 0; co < cout_; ++co)
                                        acc[co] += xv * static_cast<acc_t<S>>(wrow[co]);
                                }
                            }
                        }
                        S* yp = &y(b, oi, oj, 0);
                        for (std::size_t co = 0; co < cout_; ++co) yp[co] = static_cast<S>(acc[co]);
                    }
        }, 1);
        return y;
    }

    /// Accumulates dw/db, returns dL/dx. x must be the forward input.
    Tensor<S> backward(const Tensor<S>& x, const Tensor<S>& dy) {
        const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
        const auto ph = layer_detail::same_pad(h, kh_, stride_);
        const auto pw = layer_detail::same_pad(w, kw_, stride_);
        if (dy.dim(0) != n || dy.dim(1) != ph.out || dy.dim(2) != pw.out || dy.dim(3) != cout_)
            throw DataError(name_ + ": gradient shape mismatch");
        Tensor<S> dx(n, h, w, cin_);
        dx.fill(S(0));
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t oi = 0; oi < ph.out; ++oi)
                for (std::size_t oj = 0; oj < pw.out; ++oj) {
                    const S* gp = &dy(b, oi, oj, 0);
                    for (std::size_t co = 0; co < cout_; ++co) db_[co] += gp[co];
                    for (std::size_t di = 0; di < kh_; ++di) {
                        const long ii = static_cast<long>(oi * stride_ + di) - ph.before;
                        if (ii < 0 || ii >= static_cast<long>(h)) continue;
                        for (std::size_t dj = 0; dj < kw_; ++dj) {
                            const long jj = static_cast<long>(oj * stride_ + dj) - pw.before;
                            if (jj < 0 || jj >= static_cast<long>(w)) continue;
                            const S* xp = &x(b, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0);
                            S* dxp = &dx(b, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0);
                            S* dwp = &dw_[((di * kw_ + dj) * cin_) * cout_];
                            const S* wp = &w_[((di * kw_ + dj) * cin_) * cout_];
                            for (std::size_t ci = 0; ci < cin_; ++ci) {
                                const acc_t<S> xv = static_cast<acc_t<S>>(xp[ci]);
                                acc_t<S> dxv = 0;
                                S* dwrow = dwp + ci * cout_;
                                const S* wrow = wp + ci * cout_;
                                for (std::size_t co = 0; co < cout_; ++co) {
                                    const acc_t<S> g = static_cast<acc_t<S>>(gp[co]);
                                    dwrow[co] += static_cast<S>(xv * g);
                                    dxv += static_cast<acc_t<S>>(wrow[co]) * g;
                                }
                                dxp[ci] += static_cast<S>(dxv);
                            }
                        }
                    }
                }
        return dx;
    }

    void zero_grad() {
        std::fill(dw_.begin(), dw_.end(), S(0));
        std::fill(db_.begin(), db_.end(), S(0));
    }

    void collect(std::vector<ParamRef<S>>& out) {
        out.push_back({w_.data(), dw_.data(), w_.size(), name_ + ".w"});
        out.push_back({b_.data(), db_.data(), b_.size(), name_ + ".b"});
    }

    std::size_t parameter_count() const { return w_.size() + b_.size(); }
    std::size_t out_channels() const { return cout_; }

  private:
    std::size_t kh_, kw_, cin_, cout_, stride_;
    std::string name_;
    std::vector<S> w_, dw_, b_, db_;
};

// ---------------------------------------------------------------------------
// Batch normalization (statistics always from the current batch; the batch
// plan upstream makes that patient-wise)
// ---------------------------------------------------------------------------

template <typename S>
class BatchNorm {
  public:
    BatchNorm(std::size_t channels, std::string name, S eps = static_cast<S>(1e-5))
        : ch_(channels), eps_(eps), name_(std::move(name)), gamma_(channels, S(1)), dgamma_(channels),
          beta_(channels, S(0)), dbeta_(channels) {}

    struct Cache {
        Tensor<S> xhat;
        std::vector<S> inv_std;
    };

    Tensor<S> forward(const Tensor<S>& x, Cache* cache = nullptr) const {
        if (x.dim(3) != ch_) throw DataError(name_ + ": channel mismatch");
        std::vector<S> mu, sigma2;
        bn_stats(x, mu, sigma2);
        std::vector<S> inv_std(ch_);
        for (std::size_t c = 0; c < ch_; ++c)
            inv_std[c] = static_cast<S>(acc_t<S>(1) /
                                        std::sqrt(static_cast<acc_t<S>>(sigma2[c]) + static_cast<acc_t<S>>(eps_)));
        Tensor<S> y = Tensor<S>::like(x);
        Tensor<S> xhat = Tensor<S>::like(x);
        const std::size_t rows = x.size() / ch_;
        for (std::size_t r = 0; r < rows; ++r) {
            const S* xp = x.data() + r * ch_;
            S* hp = xhat.data() + r * ch_;
            S* yp = y.data() + r * ch_;
            for (std::size_t c = 0; c < ch_; ++c) {
                hp[c] = (xp[c] - mu[c]) * inv_std[c];
                yp[c] = gamma_[c] * hp[c] + beta_[c];
            }
        }
        if (cache) {
            cache->xhat = std::move(xhat);
            cache->inv_std = std::move(inv_std);
        }
        return y;
    }

    /// Backward through the batch statistics (mean and population variance
    /// are functions of x): dx = γ/(m·σ)·(m·dŷ − Σdŷ − x̂·Σ(dŷ·x̂)).
    Tensor<S> backward(const Tensor<S>& dy, const Cache& cache) {
        if (dy.dim(3) != ch_) throw DataError(name_ + ": gradient channel mismatch");
        const std::size_t rows = dy.size() / ch_;
        const acc_t<S> m = static_cast<acc_t<S>>(rows);
        std::vector<acc_t<S>> sum_dy(ch_, 0), sum_dy_xhat(ch_, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            const S* gp = dy.data() + r * ch_;
            const S* hp = cache.xhat.data() + r * ch_;
            for (std::size_t c = 0; c < ch_; ++c) {
                sum_dy[c] += static_cast<acc_t<S>>(gp[c]);
                sum_dy_xhat[c] += static_cast<acc_t<S>>(gp[c]) * static_cast<acc_t<S>>(hp[c]);
            }
        }
        for (std::size_t c = 0; c < ch_; ++c) {
            dgamma_[c] += static_cast<S>(sum_dy_xhat[c]);
            dbeta_[c] += static_cast<S>(sum_dy[c]);
        }
        Tensor<S> dx = Tensor<S>::like(dy);
        for (std::size_t r = 0; r < rows; ++r) {
            const S* gp = dy.data() + r * ch_;
            const S* hp = cache.xhat.data() + r * ch_;
            S* dp = dx.data() + r * ch_;
            for (std::size_t c = 0; c < ch_; ++c) {
                const acc_t<S> term = m * static_cast<acc_t<S>>(gp[c]) - sum_dy[c] -
                                      static_cast<acc_t<S>>(hp[c]) * sum_dy_xhat[c];
                dp[c] = static_cast<S>(static_cast<acc_t<S>>(gamma_[c]) *
                                       static_cast<acc_t<S>>(cache.inv_std[c]) * term / m);
            }
        }
        return dx;
    }

    void zero_grad() {
        std::fill(dgamma_.begin(), dgamma_.end(), S(0));
        std::fill(dbeta_.begin(), dbeta_.end(), S(0));
    }

    void collect(std::vector<ParamRef<S>>& out) {
        out.push_back({gamma_.data(), dgamma_.data(), gamma_.size(), name_ + ".gamma"});
        out.push_back({beta_.data(), dbeta_.data(), beta_.size(), name_ + ".beta"});
    }

    std::size_t parameter_count() const { return 2 * ch_; }

  private:
    std::size_t ch_;
    S eps_;
    std::string name_;
    std::vector<S> gamma_, dgamma_, beta_, dbeta_;
};

// ---------------------------------------------------------------------------
// Pointwise activations and heads
// ---------------------------------------------------------------------------

/// slope 0 is the plain rectifier. Backward derives the mask from the output
/// (positive slope keeps the sign), taking the sub-gradient `slope` at zero.
template <typename S>
inline Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
    Tensor<S> y = Tensor<S>::like(x);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > S(0) ? x[i] : slope * x[i];
    return y;
}

template <typename S>
inline Tensor<S> leaky_relu_backward(const Tensor<S>& y, const Tensor<S>& dy, S slope) {
    Tensor<S> dx = Tensor<S>::like(dy);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = y[i] > S(0) ? dy[i] : slope * dy[i];
    return dx;
}

template <typename S>
inline Tensor<S> sigmoid(const Tensor<S>& x) {
    Tensor<S> y = Tensor<S>::like(x);
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = static_cast<S>(acc_t<S>(1) / (acc_t<S>(1) + std::exp(-static_cast<acc_t<S>>(x[i]))));
    return y;
}

template <typename S>
inline Tensor<S> sigmoid_backward(const Tensor<S>& y, const Tensor<S>& dy) {
    Tensor<S> dx = Tensor<S>::like(dy);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * y[i] * (S(1) - y[i]);
    return dx;
}

/// Per-pixel softmax over the channel axis, max-subtracted.
template <typename S>
inline Tensor<S> softmax_channels(const Tensor<S>& x) {
    const std::size_t ch = x.dim(3), rows = x.size() / ch;
    Tensor<S> y = Tensor<S>::like(x);
    for (std::size_t r = 0; r < rows; ++r) {
        const S* xp = x.data() + r * ch;
        S* yp = y.data() + r * ch;
        acc_t<S> mx = static_cast<acc_t<S>>(xp[0]);
        for (std::size_t c = 1; c < ch; ++c) mx = std::max(mx, static_cast<acc_t<S>>(xp[c]));
        acc_t<S> sum = 0;
        for (std::size_t c = 0; c < ch; ++c) {
            const acc_t<S> e = std::exp(static_cast<acc_t<S>>(xp[c]) - mx);
            yp[c] = static_cast<S>(e);
            sum += e;
        }
        for (std::size_t c = 0; c < ch; ++c) yp[c] = static_cast<S>(static_cast<acc_t<S>>(yp[c]) / sum);
    }
    return y;
}

template <typename S>
inline Tensor<S> softmax_channels_backward(const Tensor<S>& y, const Tensor<S>& dy) {
    const std::size_t ch = y.dim(3), rows = y.size() / ch;
    Tensor<S> dx = Tensor<S>::like(y);
    for (std::size_t r = 0; r < rows; ++r) {
        const S* yp = y.data() + r * ch;
        const S* gp = dy.data() + r * ch;
        S* dp = dx.data() + r * ch;
        acc_t<S> dot = 0;
        for (std::size_t c = 0; c < ch; ++c)
            dot += static_cast<acc_t<S>>(gp[c]) * static_cast<acc_t<S>>(yp[c]);
        for (std::size_t c = 0; c < ch; ++c)
            dp[c] = static_cast<S>(static_cast<acc_t<S>>(yp[c]) * (static_cast<acc_t<S>>(gp[c]) - dot));
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour 2x resize and channel concatenation
// ---------------------------------------------------------------------------

template <typename S>
inline Tensor<S> resize2x(const Tensor<S>& x) {
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    Tensor<S> y(n, 2 * h, 2 * w, c);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < 2 * h; ++i)
            for (std::size_t j = 0; j < 2 * w; ++j) {
                const S* xp = &x(b, i / 2, j / 2, 0);
                S* yp = &y(b, i, j, 0);
                for (std::size_t k = 0; k < c; ++k) yp[k] = xp[k];
            }
    return y;
}

template <typename S>
inline Tensor<S> resize2x_backward(const Tensor<S>& dy) {
    const std::size_t n = dy.dim(0), h2 = dy.dim(1), w2 = dy.dim(2), c = dy.dim(3);
    Tensor<S> dx(n, h2 / 2, w2 / 2, c);
    dx.fill(S(0));
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < h2; ++i)
            for (std::size_t j = 0; j < w2; ++j) {
                const S* gp = &dy(b, i, j, 0);
                S* dp = &dx(b, i / 2, j / 2, 0);
                for (std::size_t k = 0; k < c; ++k) dp[k] += gp[k];
            }
    return dx;
}

template <typename S>
inline Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        throw DataError("concat_channels: spatial/batch mismatch");
    const std::size_t ca = a.dim(3), cb = b.dim(3);
    Tensor<S> y(a.dim(0), a.dim(1), a.dim(2), ca + cb);
    const std::size_t rows = y.size() / (ca + cb);
    for (std::size_t r = 0; r < rows; ++r) {
        S* yp = y.data() + r * (ca + cb);
        const S* ap = a.data() + r * ca;
        const S* bp = b.data() + r * cb;
        for (std::size_t k = 0; k < ca; ++k) yp[k] = ap[k];
        for (std::size_t k = 0; k < cb; ++k) yp[ca + k] = bp[k];
    }
    return y;
}

template <typename S>
inline void split_channels_grad(const Tensor<S>& dy, std::size_t ca, Tensor<S>& da, Tensor<S>& db) {
    const std::size_t cb = dy.dim(3) - ca;
    da = Tensor<S>(dy.dim(0), dy.dim(1), dy.dim(2), ca);
    db = Tensor<S>(dy.dim(0), dy.dim(1), dy.dim(2), cb);
    const std::size_t rows = dy.size() / (ca + cb);
    for (std::size_t r = 0; r < rows; ++r) {
        const S* gp = dy.data() + r * (ca + cb);
        S* ap = da.data() + r * ca;
        S* bp = db.data() + r * cb;
        for (std::size_t k = 0; k < ca; ++k) ap[k] = gp[k];
        for (std::size_t k = 0; k < cb; ++k) bp[k] = gp[ca + k];
    }
}

// ---------------------------------------------------------------------------
// Bidirectional LSTM over the batch axis (the slice sequence), weights
// shared across spatial positions, hidden size = channel count, directions
// combined by summation
// ---------------------------------------------------------------------------

template <typename S>
class BiLstm {
  public:
    BiLstm(std::size_t channels, std::string name) : ch_(channels), name_(std::move(name)) {
        for (int d = 0; d < 2; ++d) {
            dir_[d].w.assign(4 * ch_ * ch_, S(0));
            dir_[d].u.assign(4 * ch_ * ch_, S(0));
            dir_[d].b.assign(4 * ch_, S(0));
            dir_[d].dw.assign(4 * ch_ * ch_, S(0));
            dir_[d].du.assign(4 * ch_ * ch_, S(0));
            dir_[d].db.assign(4 * ch_, S(0));
        }
    }

    void init(Rng& rng) {
        for (int d = 0; d < 2; ++d) {
            layer_detail::glorot_fill(rng, dir_[d].w, ch_, ch_);
            layer_detail::glorot_fill(rng, dir_[d].u, ch_, ch_);
            std::fill(dir_[d].b.begin(), dir_[d].b.end(), S(0));
            // forget-gate bias 1 keeps early memory open
            for (std::size_t k = 0; k < ch_; ++k) dir_[d].b[ch_ + k] = S(1);
        }
    }

    struct Cache {
        Tensor<S> x;
        // per direction, per step: gate activations and states, each (P, C)
        std::vector<std::vector<S>> i[2], f[2], g[2], o[2], c[2], tc[2], h[2];
    };

    /// x is (T, H, W, C); the T axis is the sequence.
    Tensor<S> forward(const Tensor<S>& x, Cache* cache = nullptr) const {
        if (x.dim(3) != ch_) throw DataError(name_ + ": channel mismatch");
        const std::size_t T = x.dim(0), P = x.dim(1) * x.dim(2);
        Tensor<S> out = Tensor<S>::like(x);
        out.fill(S(0));
        Cache local;
        Cache& cc = cache ? *cache : local;
        if (cache) cc.x = x;
        for (int d = 0; d < 2; ++d) {
            cc.i[d].assign(T, {});
            cc.f[d].assign(T, {});
            cc.g[d].assign(T, {});
            cc.o[d].assign(T, {});
            cc.c[d].assign(T, {});
            cc.tc[d].assign(T, {});
            cc.h[d].assign(T, {});
            std::vector<S> h_prev(P * ch_, S(0)), c_prev(P * ch_, S(0));
            std::vector<acc_t<S>> pre(4 * ch_);
            for (std::size_t s = 0; s < T; ++s) {
                const std::size_t t = d == 0 ? s : T - 1 - s;
                const S* xt = x.data() + t * P * ch_;
                auto& iv = cc.i[d][s];
                auto& fv = cc.f[d][s];
                auto& gv = cc.g[d][s];
                auto& ov = cc.o[d][s];
                auto& cv = cc.c[d][s];
                auto& tv = cc.tc[d][s];
                auto& hv = cc.h[d][s];
                iv.resize(P * ch_);
                fv.resize(P * ch_);
                gv.resize(P * ch_);
                ov.resize(P * ch_);
                cv.resize(P * ch_);
                tv.resize(P * ch_);
                hv.resize(P * ch_);
                const auto& D = dir_[d];
                for (std::size_t p = 0; p < P; ++p) {
                    const S* xp = xt + p * ch_;
                    const S* hp = h_prev.data() + p * ch_;
                    for (std::size_t r = 0; r < 4 * ch_; ++r) {
                        acc_t<S> a = static_cast<acc_t<S>>(D.b[r]);
                        const S* wr = &D.w[r * ch_];
                        const S* ur = &D.u[r * ch_];
                        for (std::size_t j = 0; j < ch_; ++j)
                            a += static_cast<acc_t<S>>(wr[j]) * static_cast<acc_t<S>>(xp[j]) +
                                 static_cast<acc_t<S>>(ur[j]) * static_cast<acc_t<S>>(hp[j]);
                        pre[r] = a;
                    }
                    for (std::size_t k = 0; k < ch_; ++k) {
                        const acc_t<S> one(1);
                        const acc_t<S> ig = one / (one + std::exp(-pre[k]));
                        const acc_t<S> fg = one / (one + std::exp(-pre[ch_ + k]));
                        const acc_t<S> gg = std::tanh(pre[2 * ch_ + k]);
                        const acc_t<S> og = one / (one + std::exp(-pre[3 * ch_ + k]));
                        const acc_t<S> cn = fg * static_cast<acc_t<S>>(c_prev[p * ch_ + k]) + ig * gg;
                        const acc_t<S> tn = std::tanh(cn);
                        iv[p * ch_ + k] = static_cast<S>(ig);
                        fv[p * ch_ + k] = static_cast<S>(fg);
                        gv[p * ch_ + k] = static_cast<S>(gg);
                        ov[p * ch_ + k] = static_cast<S>(og);
                        cv[p * ch_ + k] = static_cast<S>(cn);
                        tv[p * ch_ + k] = static_cast<S>(tn);
                        hv[p * ch_ + k] = static_cast<S>(og * tn);
                    }
                }
                S* op = out.data() + t * P * ch_;
                for (std::size_t q = 0; q < P * ch_; ++q) op[q] += hv[q];
                h_prev = hv;
                c_prev = cv;
            }
        }
        return out;
    }

    Tensor<S> backward(const Tensor<S>& dy, const Cache& cc) {
        const std::size_t T = dy.dim(0), P = dy.dim(1) * dy.dim(2);
        if (dy.dim(3) != ch_) throw DataError(name_ + ": gradient channel mismatch");
        Tensor<S> dx = Tensor<S>::like(dy);
        dx.fill(S(0));
        for (int d = 0; d < 2; ++d) {
            auto& D = dir_[d];
            std::vector<acc_t<S>> dh_carry(P * ch_, 0), dc_carry(P * ch_, 0);
            std::vector<acc_t<S>> dpre(4 * ch_);
            for (std::size_t s = T; s-- > 0;) {
                const std::size_t t = d == 0 ? s : T - 1 - s;
                const S* gy = dy.data() + t * P * ch_;
                const S* xt = cc.x.data() + t * P * ch_;
                S* gx = dx.data() + t * P * ch_;
                const auto& iv = cc.i[d][s];
                const auto& fv = cc.f[d][s];
                const auto& gv = cc.g[d][s];
                const auto& ov = cc.o[d][s];
                const auto& tv = cc.tc[d][s];
                const std::vector<S>* h_prev = s > 0 ? &cc.h[d][s - 1] : nullptr;
                const std::vector<S>* c_prev = s > 0 ? &cc.c[d][s - 1] : nullptr;
                for (std::size_t p = 0; p < P; ++p) {
                    for (std::size_t k = 0; k < ch_; ++k) {
                        const std::size_t q = p * ch_ + k;
                        const acc_t<S> one(1);
                        const acc_t<S> dh = static_cast<acc_t<S>>(gy[q]) + dh_carry[q];
                        const acc_t<S> o = static_cast<acc_t<S>>(ov[q]);
                        const acc_t<S> tc = static_cast<acc_t<S>>(tv[q]);
                        const acc_t<S> dc = dh * o * (one - tc * tc) + dc_carry[q];
                        const acc_t<S> i = static_cast<acc_t<S>>(iv[q]);
                        const acc_t<S> f = static_cast<acc_t<S>>(fv[q]);
                        const acc_t<S> g = static_cast<acc_t<S>>(gv[q]);
                        const acc_t<S> cp = c_prev ? static_cast<acc_t<S>>((*c_prev)[q]) : acc_t<S>(0);
                        dpre[k] = dc * g * i * (one - i);
                        dpre[ch_ + k] = dc * cp * f * (one - f);
                        dpre[2 * ch_ + k] = dc * i * (one - g * g);
                        dpre[3 * ch_ + k] = dh * tc * o * (one - o);
                        dc_carry[q] = dc * f;
                        dh_carry[q] = 0;
                    }
                    const S* xp = xt + p * ch_;
                    for (std::size_t r = 0; r < 4 * ch_; ++r) {
                        const acc_t<S> dp = dpre[r];
                        if (dp == acc_t<S>(0)) continue;
                        S* dwr = &D.dw[r * ch_];
                        S* dur = &D.du[r * ch_];
                        const S* wr = &D.w[r * ch_];
                        const S* ur = &D.u[r * ch_];
                        D.db[r] += static_cast<S>(dp);
                        for (std::size_t j = 0; j < ch_; ++j) {
                            dwr[j] += static_cast<S>(dp * static_cast<acc_t<S>>(xp[j]));
                            gx[p * ch_ + j] += static_cast<S>(dp * static_cast<acc_t<S>>(wr[j]));
                            if (h_prev) {
                                dur[j] += static_cast<S>(dp * static_cast<acc_t<S>>((*h_prev)[p * ch_ + j]));
                                dh_carry[p * ch_ + j] += dp * static_cast<acc_t<S>>(ur[j]);
                            }
                        }
                    }
                }
            }
        }
        return dx;
    }

    void zero_grad() {
        for (int d = 0; d < 2; ++d) {
            std::fill(dir_[d].dw.begin(), dir_[d].dw.end(), S(0));
            std::fill(dir_[d].du.begin(), dir_[d].du.end(), S(0));
            std::fill(dir_[d].db.begin(), dir_[d].db.end(), S(0));
        }
    }

    void collect(std::vector<ParamRef<S>>& out) {
        const char* tag[2] = {".fwd", ".bwd"};
        for (int d = 0; d < 2; ++d) {
            out.push_back({dir_[d].w.data(), dir_[d].dw.data(), dir_[d].w.size(), name_ + tag[d] + ".w"});
            out.push_back({dir_[d].u.data(), dir_[d].du.data(), dir_[d].u.size(), name_ + tag[d] + ".u"});
            out.push_back({dir_[d].b.data(), dir_[d].db.data(), dir_[d].b.size(), name_ + tag[d] + ".b"});
        }
    }

    std::size_t parameter_count() const { return 2 * (8 * ch_ * ch_ + 4 * ch_); }

    /// Exchanges the two directional sub-layers; with the input and output
    /// both reversed this leaves the bidirectional result unchanged.
    void swap_directions() { std::swap(dir_[0], dir_[1]); }

  private:
    struct Direction {
        std::vector<S> w, u, b, dw, du, db;
    };
    std::size_t ch_;
    std::string name_;
    Direction dir_[2];
};

}  // namespace refinegan
