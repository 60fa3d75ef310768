#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "refinegan/layers.hpp"
#include "refinegan/mvol.hpp"

namespace refinegan {

struct NetConfig {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t in_channels = 1;
    std::size_t class_count = 2;
    std::size_t depth = 2;       // encoder levels
    std::size_t base_filters = 4;
    bool recurrent = false;      // bidirectional recurrence over the slice axis
    bool noise_input = false;    // extra noise channel appended to the input
    std::uint64_t seed = 0;

    void validate() const {
        if (depth < 2) throw ConfigError("net config: depth must be at least 2");
        if (base_filters < 4) throw ConfigError("net config: base_filters must be at least 4");
        if (in_channels < 1 || class_count < 1) throw ConfigError("net config: channel counts must be positive");
        const std::size_t div = std::size_t{1} << depth;
        if (height == 0 || width == 0 || height % div != 0 || width % div != 0)
            throw ConfigError("net config: spatial size must be divisible by 2^depth");
    }

    friend bool operator==(const NetConfig& a, const NetConfig& b) {
        return a.height == b.height && a.width == b.width && a.in_channels == b.in_channels &&
               a.class_count == b.class_count && a.depth == b.depth && a.base_filters == b.base_filters &&
               a.recurrent == b.recurrent && a.noise_input == b.noise_input && a.seed == b.seed;
    }
};

namespace net_detail {

template <typename S>
struct Block {
    Conv2D<S> conv;
    BatchNorm<S> bn;
    S slope;  // 0 = plain rectifier

    Block(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout, std::size_t stride, S slope_,
          const std::string& name)
        : conv(kh, kw, cin, cout, stride, name), bn(cout, name + ".bn"), slope(slope_) {}

    Tensor<S> forward(const Tensor<S>& x, typename BatchNorm<S>::Cache* bnc) const {
        return leaky_relu(bn.forward(conv.forward(x), bnc), slope);
    }
    /// x = forward input, y = forward output.
    Tensor<S> backward(const Tensor<S>& x, const Tensor<S>& y, const Tensor<S>& dy,
                       const typename BatchNorm<S>::Cache& bnc) {
        return conv.backward(x, bn.backward(leaky_relu_backward(y, dy, slope), bnc));
    }
    void init(Rng& rng) { conv.init(rng); }
    void zero_grad() {
        conv.zero_grad();
        bn.zero_grad();
    }
    void collect(std::vector<ParamRef<S>>& out) {
        conv.collect(out);
        bn.collect(out);
    }
    std::size_t parameter_count() const { return conv.parameter_count() + bn.parameter_count(); }
};

template <typename S>
inline void add_into(Tensor<S>& dst, const Tensor<S>& src) {
    require_same_shape(dst, src, "gradient accumulation");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename S>
inline void accumulate(Tensor<S>& dst, Tensor<S>&& src) {
    if (dst.empty())
        dst = std::move(src);
    else
        add_into(dst, src);
}

/// Shared hourglass: `depth` conv(5x5, stride 2) encoder blocks with leaky
/// activations, an optional bidirectional recurrence over the slice axis at
/// the bottleneck, and `depth` decoder blocks of nearest 2x resize + conv
/// (3x3, stride 1). Each decoder level concatenates the encoder activation
/// at the matching resolution; the last one concatenates the raw input.
template <typename S>
struct UnetBody {
    std::size_t depth;
    std::size_t in_ch;
    std::vector<Block<S>> enc, dec;
    std::optional<BiLstm<S>> lstm;

    UnetBody(const NetConfig& cfg, std::size_t input_channels, bool with_lstm, const std::string& prefix)
        : depth(cfg.depth), in_ch(input_channels) {
        std::size_t cin = in_ch;
        for (std::size_t i = 0; i < depth; ++i) {
            const std::size_t cout = cfg.base_filters << i;
            enc.emplace_back(5, 5, cin, cout, 2, static_cast<S>(0.2), prefix + ".enc" + std::to_string(i));
            cin = cout;
        }
        if (with_lstm) lstm.emplace(cin, prefix + ".lstm");
        std::size_t prev = cin;
        for (std::size_t k = 0; k < depth; ++k) {
            const std::size_t level = depth - 1 - k;
            const std::size_t skip_ch = level >= 1 ? (cfg.base_filters << (level - 1)) : in_ch;
            const std::size_t cout = cfg.base_filters << (level >= 1 ? level - 1 : 0);
            dec.emplace_back(3, 3, prev + skip_ch, cout, 1, S(0), prefix + ".dec" + std::to_string(k));
            prev = cout;
        }
    }

    std::size_t out_channels() const { return dec.back().conv.out_channels(); }

    struct Cache {
        Tensor<S> x0;
        std::vector<typename BatchNorm<S>::Cache> enc_bn;
        std::vector<Tensor<S>> enc_y;
        typename BiLstm<S>::Cache lstm;
        Tensor<S> lstm_out;
        std::vector<Tensor<S>> dec_in;
        std::vector<typename BatchNorm<S>::Cache> dec_bn;
        std::vector<Tensor<S>> dec_y;
    };

    Tensor<S> forward(const Tensor<S>& x, Cache* c) const {
        std::vector<Tensor<S>> local;
        std::vector<Tensor<S>>& acts = c ? c->enc_y : local;
        acts.assign(depth, {});
        if (c) {
            c->x0 = x;
            c->enc_bn.assign(depth, {});
            c->dec_in.assign(depth, {});
            c->dec_bn.assign(depth, {});
            c->dec_y.assign(depth, {});
        }
        const Tensor<S>* src = &x;
        for (std::size_t i = 0; i < depth; ++i) {
            acts[i] = enc[i].forward(*src, c ? &c->enc_bn[i] : nullptr);
            src = &acts[i];
        }
        Tensor<S> cur;
        if (lstm) {
            cur = lstm->forward(acts[depth - 1], c ? &c->lstm : nullptr);
            if (c) c->lstm_out = cur;
        } else {
            cur = c ? acts[depth - 1] : std::move(acts[depth - 1]);
        }
        for (std::size_t k = 0; k < depth; ++k) {
            const std::size_t level = depth - 1 - k;
            Tensor<S> cat;
            {
                Tensor<S> up = resize2x(cur);
                const Tensor<S>& skip = level >= 1 ? acts[level - 1] : x;
                cat = concat_channels(up, skip);
            }
            if (!c && level >= 1) acts[level - 1] = Tensor<S>();  // skip consumed, release
            cur = dec[k].forward(cat, c ? &c->dec_bn[k] : nullptr);
            if (c) {
                c->dec_in[k] = std::move(cat);
                c->dec_y[k] = cur;
            }
        }
        return cur;
    }

    /// dy is the gradient at the body output; returns the gradient at the
    /// body input, accumulating parameter gradients along the way.
    Tensor<S> backward(const Tensor<S>& dy, const Cache& c) {
        Tensor<S> d = dy;
        std::vector<Tensor<S>> dacts(depth);
        Tensor<S> dx0;
        for (std::size_t k = depth; k-- > 0;) {
            const std::size_t level = depth - 1 - k;
            Tensor<S> dcat = dec[k].backward(c.dec_in[k], c.dec_y[k], d, c.dec_bn[k]);
            const std::size_t skip_ch = level >= 1 ? c.enc_y[level - 1].dim(3) : c.x0.dim(3);
            const std::size_t up_ch = dcat.dim(3) - skip_ch;
            Tensor<S> dup, dskip;
            split_channels_grad(dcat, up_ch, dup, dskip);
            if (level >= 1)
                accumulate(dacts[level - 1], std::move(dskip));
            else
                accumulate(dx0, std::move(dskip));
            d = resize2x_backward(dup);
        }
        if (lstm) d = lstm->backward(d, c.lstm);
        for (std::size_t i = depth; i-- > 0;) {
            if (!dacts[i].empty()) add_into(d, dacts[i]);
            const Tensor<S>& xin = i == 0 ? c.x0 : c.enc_y[i - 1];
            d = enc[i].backward(xin, c.enc_y[i], d, c.enc_bn[i]);
        }
        accumulate(dx0, std::move(d));
        return dx0;
    }

    void init(Rng& rng) {
        for (auto& b : enc) b.init(rng);
        if (lstm) lstm->init(rng);
        for (auto& b : dec) b.init(rng);
    }
    void zero_grad() {
        for (auto& b : enc) b.zero_grad();
        if (lstm) lstm->zero_grad();
        for (auto& b : dec) b.zero_grad();
    }
    void collect(std::vector<ParamRef<S>>& out) {
        for (auto& b : enc) b.collect(out);
        if (lstm) lstm->collect(out);
        for (auto& b : dec) b.collect(out);
    }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& b : enc) n += b.parameter_count();
        if (lstm) n += lstm->parameter_count();
        for (const auto& b : dec) n += b.parameter_count();
        return n;
    }
};

template <typename S>
inline void check_batch(const Tensor<S>& x, const NetConfig& cfg, std::size_t channels, const char* who) {
    if (x.dim(0) < 1 || x.dim(1) != cfg.height || x.dim(2) != cfg.width || x.dim(3) != channels)
        throw DataError(std::string(who) + ": batch shape does not match the network configuration");
}

}  // namespace net_detail

// ---------------------------------------------------------------------------
// Generator: image slices -> per-pixel class probabilities (softmax head)
// ---------------------------------------------------------------------------

template <typename S>
class Generator {
  public:
    explicit Generator(const NetConfig& cfg)
        : cfg_((cfg.validate(), cfg)),
          body_(cfg, cfg.in_channels + (cfg.noise_input ? 1 : 0), cfg.recurrent, "g"),
          head_(1, 1, body_.out_channels(), cfg.class_count, 1, "g.head") {
        Rng rng(cfg_.seed);
        body_.init(rng);
        head_.init(rng);
    }

    const NetConfig& config() const { return cfg_; }
    /// Includes the noise channel when configured; the caller concatenates
    /// the noise so that forward stays a pure function of its inputs.
    std::size_t input_channels() const { return cfg_.in_channels + (cfg_.noise_input ? 1 : 0); }

    struct Cache {
        typename net_detail::UnetBody<S>::Cache body;
        Tensor<S> probs;
    };

    Tensor<S> forward(const Tensor<S>& x, Cache* c = nullptr) const {
        net_detail::check_batch(x, cfg_, input_channels(), "generator");
        Tensor<S> a = body_.forward(x, c ? &c->body : nullptr);
        Tensor<S> p = softmax_channels(head_.forward(a));
        if (c) c->probs = p;
        return p;
    }

    /// dprobs = gradient at the probability output.
    Tensor<S> backward(const Tensor<S>& dprobs, const Cache& c) {
        Tensor<S> dz = softmax_channels_backward(c.probs, dprobs);
        Tensor<S> da = head_.backward(c.body.dec_y.back(), dz);
        return body_.backward(da, c.body);
    }

    void zero_grad() {
        body_.zero_grad();
        head_.zero_grad();
    }
    std::vector<ParamRef<S>> params() {
        std::vector<ParamRef<S>> out;
        body_.collect(out);
        head_.collect(out);
        return out;
    }
    std::size_t parameter_count() const { return body_.parameter_count() + head_.parameter_count(); }
    BiLstm<S>* recurrence() { return body_.lstm ? &*body_.lstm : nullptr; }

    static constexpr std::uint8_t kind = 0;

  private:
    NetConfig cfg_;
    net_detail::UnetBody<S> body_;
    Conv2D<S> head_;
};

// ---------------------------------------------------------------------------
// Discriminator: (image, segmentation) pair -> per-pixel real probability.
// Stride-1 conv stack keeps the judgment local; the full-resolution map is
// the single-pixel-patch decision.
// ---------------------------------------------------------------------------

template <typename S>
class Discriminator {
  public:
    explicit Discriminator(const NetConfig& cfg) : cfg_((cfg.validate(), cfg)) {
        std::size_t cin = input_channels();
        for (std::size_t i = 0; i < cfg_.depth; ++i) {
            const std::size_t cout = cfg_.base_filters << i;
            blocks_.emplace_back(3, 3, cin, cout, 1, static_cast<S>(0.2), "d.conv" + std::to_string(i));
            cin = cout;
        }
        if (cfg_.recurrent) lstm_.emplace(cin, "d.lstm");
        head_.emplace(1, 1, cin, 1, 1, "d.head");
        Rng rng(cfg_.seed);
        for (auto& b : blocks_) b.init(rng);
        if (lstm_) lstm_->init(rng);
        head_->init(rng);
    }

    const NetConfig& config() const { return cfg_; }
    std::size_t input_channels() const { return cfg_.in_channels + cfg_.class_count; }

    struct Cache {
        Tensor<S> x0;
        std::vector<typename BatchNorm<S>::Cache> bn;
        std::vector<Tensor<S>> y;
        typename BiLstm<S>::Cache lstm;
        Tensor<S> lstm_out;
        Tensor<S> out;
    };

    Tensor<S> forward(const Tensor<S>& x, Cache* c = nullptr) const {
        net_detail::check_batch(x, cfg_, input_channels(), "discriminator");
        std::vector<Tensor<S>> local;
        std::vector<Tensor<S>>& acts = c ? c->y : local;
        acts.assign(blocks_.size(), {});
        if (c) {
            c->x0 = x;
            c->bn.assign(blocks_.size(), {});
        }
        const Tensor<S>* src = &x;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            acts[i] = blocks_[i].forward(*src, c ? &c->bn[i] : nullptr);
            src = &acts[i];
        }
        Tensor<S> cur;
        if (lstm_) {
            cur = lstm_->forward(acts.back(), c ? &c->lstm : nullptr);
            if (c) c->lstm_out = cur;
        } else {
            cur = c ? acts.back() : std::move(acts.back());
        }
        Tensor<S> out = sigmoid(head_->forward(cur));
        if (c) c->out = out;
        return out;
    }

    Tensor<S> backward(const Tensor<S>& dout, const Cache& c) {
        Tensor<S> d = sigmoid_backward(c.out, dout);
        d = head_->backward(lstm_ ? c.lstm_out : c.y.back(), d);
        if (lstm_) d = lstm_->backward(d, c.lstm);
        for (std::size_t i = blocks_.size(); i-- > 0;) {
            const Tensor<S>& xin = i == 0 ? c.x0 : c.y[i - 1];
            d = blocks_[i].backward(xin, c.y[i], d, c.bn[i]);
        }
        return d;
    }

    void zero_grad() {
        for (auto& b : blocks_) b.zero_grad();
        if (lstm_) lstm_->zero_grad();
        head_->zero_grad();
    }
    std::vector<ParamRef<S>> params() {
        std::vector<ParamRef<S>> out;
        for (auto& b : blocks_) b.collect(out);
        if (lstm_) lstm_->collect(out);
        head_->collect(out);
        return out;
    }
    std::size_t parameter_count() const {
        std::size_t n = head_->parameter_count();
        for (const auto& b : blocks_) n += b.parameter_count();
        if (lstm_) n += lstm_->parameter_count();
        return n;
    }
    BiLstm<S>* recurrence() { return lstm_ ? &*lstm_ : nullptr; }

    static constexpr std::uint8_t kind = 1;

  private:
    NetConfig cfg_;
    std::vector<net_detail::Block<S>> blocks_;
    std::optional<BiLstm<S>> lstm_;
    std::optional<Conv2D<S>> head_;
};

// ---------------------------------------------------------------------------
// Refinement: (image, generator probabilities) -> per-class wrong-inclusion
// and wrong-omission maps, 2C sigmoid channels (fp for every class first,
// then fn). The slice recurrence at the bottleneck is always on.
// ---------------------------------------------------------------------------

template <typename S>
class Refinement {
  public:
    explicit Refinement(const NetConfig& cfg)
        : cfg_((cfg.validate(), cfg)), body_(cfg, cfg.in_channels + cfg.class_count, true, "r"),
          head_(1, 1, body_.out_channels(), 2 * cfg.class_count, 1, "r.head") {
        Rng rng(cfg_.seed);
        body_.init(rng);
        head_.init(rng);
    }

    const NetConfig& config() const { return cfg_; }
    std::size_t input_channels() const { return cfg_.in_channels + cfg_.class_count; }

    struct Cache {
        typename net_detail::UnetBody<S>::Cache body;
        Tensor<S> out;
    };

    Tensor<S> forward(const Tensor<S>& x, Cache* c = nullptr) const {
        net_detail::check_batch(x, cfg_, input_channels(), "refinement");
        Tensor<S> a = body_.forward(x, c ? &c->body : nullptr);
        Tensor<S> out = sigmoid(head_.forward(a));
        if (c) c->out = out;
        return out;
    }

    Tensor<S> backward(const Tensor<S>& dout, const Cache& c) {
        Tensor<S> dz = sigmoid_backward(c.out, dout);
        Tensor<S> da = head_.backward(c.body.dec_y.back(), dz);
        return body_.backward(da, c.body);
    }

    void zero_grad() {
        body_.zero_grad();
        head_.zero_grad();
    }
    std::vector<ParamRef<S>> params() {
        std::vector<ParamRef<S>> out;
        body_.collect(out);
        head_.collect(out);
        return out;
    }
    std::size_t parameter_count() const { return body_.parameter_count() + head_.parameter_count(); }
    BiLstm<S>* recurrence() { return body_.lstm ? &*body_.lstm : nullptr; }
    /// Pins the output at one half everywhere (sigmoid of zero).
    void zero_head() { head_.init_zero(); }

    static constexpr std::uint8_t kind = 2;

  private:
    NetConfig cfg_;
    net_detail::UnetBody<S> body_;
    Conv2D<S> head_;
};

// ---------------------------------------------------------------------------
// Checkpoints: magic, config echo, then every parameter tensor in
// declaration order as little-endian f32.
// ---------------------------------------------------------------------------

struct CheckpointData {
    std::uint8_t kind = 0;
    NetConfig cfg;
    std::uint64_t run_seed = 0;
    std::vector<std::vector<float>> tensors;
};

namespace net_detail {
inline void put_cfg(std::string& b, const NetConfig& cfg) {
    using namespace mvol_detail;
    put_u32(b, static_cast<std::uint32_t>(cfg.height));
    put_u32(b, static_cast<std::uint32_t>(cfg.width));
    put_u32(b, static_cast<std::uint32_t>(cfg.in_channels));
    put_u32(b, static_cast<std::uint32_t>(cfg.class_count));
    put_u32(b, static_cast<std::uint32_t>(cfg.depth));
    put_u32(b, static_cast<std::uint32_t>(cfg.base_filters));
    put_u8(b, cfg.recurrent ? 1 : 0);
    put_u8(b, cfg.noise_input ? 1 : 0);
    put_u64(b, cfg.seed);
}
}  // namespace net_detail

template <typename Net>
inline void save_net(const std::string& path, Net& net, std::uint64_t run_seed) {
    using namespace mvol_detail;
    std::string b;
    b += "RGCK";
    put_u8(b, 1);  // version
    put_u8(b, Net::kind);
    net_detail::put_cfg(b, net.config());
    put_u64(b, run_seed);
    auto params = net.params();
    put_u32(b, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put_u32(b, static_cast<std::uint32_t>(p.count));
        for (std::size_t i = 0; i < p.count; ++i) put_f32(b, static_cast<float>(p.value[i]));
    }
    write_file_bytes(path, b);
}

inline CheckpointData read_checkpoint(const std::string& path) {
    using namespace mvol_detail;
    const std::string bytes = read_file_bytes(path);
    Reader r{reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()};
    r.need(4, "checkpoint magic");
    if (std::string(bytes.data(), 4) != "RGCK")
        throw FormatError(FormatError::Kind::bad_magic, "not a checkpoint file: " + path);
    r.off = 4;
    const std::uint8_t version = r.u8("checkpoint version");
    if (version != 1) throw FormatError(FormatError::Kind::bad_header, "unsupported checkpoint version");
    CheckpointData ck;
    ck.kind = r.u8("checkpoint kind");
    if (ck.kind > 2) throw FormatError(FormatError::Kind::bad_header, "unknown network kind in checkpoint");
    ck.cfg.height = r.u32("config");
    ck.cfg.width = r.u32("config");
    ck.cfg.in_channels = r.u32("config");
    ck.cfg.class_count = r.u32("config");
    ck.cfg.depth = r.u32("config");
    ck.cfg.base_filters = r.u32("config");
    ck.cfg.recurrent = r.u8("config") != 0;
    ck.cfg.noise_input = r.u8("config") != 0;
    ck.cfg.seed = r.u64("config");
    ck.run_seed = r.u64("run seed");
    const std::uint32_t n_tensors = r.u32("tensor count");
    ck.tensors.resize(n_tensors);
    for (std::uint32_t t = 0; t < n_tensors; ++t) {
        const std::uint32_t count = r.u32("tensor size");
        ck.tensors[t].resize(count);
        for (std::uint32_t i = 0; i < count; ++i) ck.tensors[t][i] = r.f32("tensor data");
    }
    return ck;
}

/// Loads a checkpoint into an already-built network. The stored config must
/// equal the network's own, field for field.
template <typename Net>
inline std::uint64_t load_net(Net& net, const std::string& path) {
    const CheckpointData ck = read_checkpoint(path);
    if (ck.kind != Net::kind) throw DataError("checkpoint holds a different network kind: " + path);
    if (!(ck.cfg == net.config())) throw DataError("checkpoint config mismatch: " + path);
    auto params = net.params();
    if (ck.tensors.size() != params.size()) throw DataError("checkpoint tensor count mismatch: " + path);
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (ck.tensors[t].size() != params[t].count)
            throw DataError("checkpoint tensor size mismatch at " + params[t].name);
        using Scalar = std::remove_pointer_t<decltype(params[t].value)>;
        for (std::size_t i = 0; i < params[t].count; ++i)
            params[t].value[i] = static_cast<Scalar>(ck.tensors[t][i]);
    }
    return ck.run_seed;
}

}  // namespace refinegan
