#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ssr/common.hpp"
#include "ssr/rng.hpp"

namespace ssr {

// Dense row-major tensor. The canonical layout is [batch, channels, height,
// width]; vectors ([C]) and scalars ([1]) use the same storage. Value
// semantics throughout: copies are deep and tensors move freely between
// threads.
template <class S>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), S(0));
    }

    Tensor(std::vector<int> shape, std::vector<S> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check(count(shape_) == static_cast<int64_t>(data_.size()),
              "tensor data length does not match shape");
    }

    static Tensor full(std::vector<int> shape, S value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor scalar(S value) { return Tensor({1}, {value}); }

    static int64_t count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int e : shape) {
            check(e > 0, "tensor extents must be positive");
            n *= e;
        }
        return n;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }

    std::vector<S>& data() { return data_; }
    const std::vector<S>& data() const { return data_; }
    S* ptr() { return data_.data(); }
    const S* ptr() const { return data_.data(); }

    S& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    S operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // [B,C,H,W] addressing.
    int64_t index4(int b, int c, int y, int x) const {
        return ((static_cast<int64_t>(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
    }
    S& at4(int b, int c, int y, int x) { return data_[static_cast<size_t>(index4(b, c, y, x))]; }
    S at4(int b, int c, int y, int x) const {
        return data_[static_cast<size_t>(index4(b, c, y, x))];
    }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool flag) {
        requires_grad_ = flag;
        if (!flag) grad_.clear();
    }

    // Populated by Tape::backward for leaves with requires_grad set.
    std::vector<S>& grad() { return grad_; }
    const std::vector<S>& grad() const { return grad_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (S v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    std::vector<int> shape_;
    std::vector<S> data_;
    std::vector<S> grad_;
    bool requires_grad_ = false;
};

template <class S>
Tensor<S> random_uniform(std::vector<int> shape, Rng& rng, S lo = S(0), S hi = S(1)) {
    Tensor<S> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

template <class S>
Tensor<S> random_normal(std::vector<int> shape, Rng& rng, S stddev = S(1)) {
    Tensor<S> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<S>(rng.normal() * static_cast<double>(stddev));
    return t;
}

}  // namespace ssr
