#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "refinegan/common.hpp"

namespace refinegan {

/// Accumulator type for elementwise reductions over S: never narrower than
/// double, and wide enough that a long double instantiation keeps its full
/// precision (the finite-difference tests rely on that).
template <typename S>
using acc_t = decltype(S{} + 0.0);

/// Dense row-major rank-4 array. The project-wide axis convention is
/// (slice/batch, row, col, channel); rank-3 data (label maps) uses a
/// trailing channel extent of 1.
template <typename T>
class Tensor {
public:
    Tensor() : dims_{0, 0, 0, 0} {}
    Tensor(std::size_t n, std::size_t h, std::size_t w, std::size_t c)
        : dims_{n, h, w, c}, v_(n * h * w * c) {}

    static Tensor like(const Tensor& o) { return Tensor(o.dims_[0], o.dims_[1], o.dims_[2], o.dims_[3]); }

    std::size_t dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
    const std::array<std::size_t, 4>& dims() const { return dims_; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    T& operator[](std::size_t i) { return v_[i]; }
    const T& operator[](std::size_t i) const { return v_[i]; }

    T& operator()(std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
        return v_[((n * dims_[1] + h) * dims_[2] + w) * dims_[3] + c];
    }
    const T& operator()(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const {
        return v_[((n * dims_[1] + h) * dims_[2] + w) * dims_[3] + c];
    }

    T* data() { return v_.data(); }
    const T* data() const { return v_.data(); }
    std::span<T> flat() { return {v_.data(), v_.size()}; }
    std::span<const T> flat() const { return {v_.data(), v_.size()}; }

    void fill(T value) { std::fill(v_.begin(), v_.end(), value); }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.dims_ == b.dims_ && a.v_ == b.v_;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(dims_[0], dims_[1], dims_[2], dims_[3]);
        for (std::size_t i = 0; i < v_.size(); ++i) out[i] = static_cast<U>(v_[i]);
        return out;
    }

private:
    std::array<std::size_t, 4> dims_;
    std::vector<T> v_;
};

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b)) throw DataError(std::string(what) + ": shape mismatch");
}

}  // namespace refinegan
