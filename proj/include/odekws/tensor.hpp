#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "odekws/errors.hpp"

namespace odekws {

/// Dense row-major tensor. The scalar type selects the engine precision:
/// float for training and inference, double for gradient verification.
template <class Real>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
        values_.assign(static_cast<size_t>(count(dims_)), Real(0));
    }

    Tensor(std::vector<int> dims, std::vector<Real> values)
        : dims_(std::move(dims)), values_(std::move(values)) {
        if (static_cast<int64_t>(values_.size()) != count(dims_))
            throw ShapeError("tensor value count does not match dims");
    }

    static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }

    static Tensor full(std::vector<int> dims, Real v) {
        Tensor t(std::move(dims));
        for (auto& x : t.values_) x = v;
        return t;
    }

    static Tensor scalar(Real v) { return Tensor({1}, {v}); }

    const std::vector<int>& dims() const { return dims_; }
    int rank() const { return static_cast<int>(dims_.size()); }
    int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(values_.size()); }
    bool empty() const { return values_.empty(); }

    Real* data() { return values_.data(); }
    const Real* data() const { return values_.data(); }
    std::vector<Real>& values() { return values_; }
    const std::vector<Real>& values() const { return values_; }

    Real& operator[](int64_t i) { return values_[static_cast<size_t>(i)]; }
    Real operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }

    // rank-2 / rank-3 element access
    Real& at(int i, int j) { return values_[static_cast<size_t>(i) * dims_[1] + j]; }
    Real at(int i, int j) const { return values_[static_cast<size_t>(i) * dims_[1] + j]; }
    Real& at(int i, int j, int k) {
        return values_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
    }
    Real at(int i, int j, int k) const {
        return values_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
    }

    bool same_dims(const Tensor& o) const { return dims_ == o.dims_; }

    bool all_finite() const {
        for (Real v : values_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    Tensor& operator+=(const Tensor& o) {
        if (!same_dims(o)) throw ShapeError("tensor += dims mismatch");
        for (size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        return *this;
    }

    Tensor& scale(Real a) {
        for (auto& v : values_) v *= a;
        return *this;
    }

    void fill(Real v) {
        for (auto& x : values_) x = v;
    }

    static int64_t count(const std::vector<int>& dims) {
        int64_t n = 1;
        for (int d : dims) {
            if (d <= 0) throw ShapeError("tensor dims must be positive");
            n *= d;
        }
        return n;
    }

    static std::string dims_str(const std::vector<int>& dims) {
        std::string s = "[";
        for (size_t i = 0; i < dims.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(dims[i]);
        }
        return s + "]";
    }

private:
    std::vector<int> dims_;
    std::vector<Real> values_;
};

}  // namespace odekws
