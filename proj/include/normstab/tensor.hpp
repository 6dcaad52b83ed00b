#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "normstab/rng.hpp"

namespace normstab {

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParameterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StructuralError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major array of doubles, rank 1..3. No views, no strides;
// sizes here are desk scale.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_size(shape_) != data_.size())
            throw DimensionError("tensor data length does not match shape");
    }

    static Tensor vector(std::vector<double> data) {
        std::vector<std::size_t> shape{data.size()};
        return Tensor(std::move(shape), std::move(data));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols) {
        return Tensor({rows, cols});
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const {
        if (i >= shape_.size()) throw DimensionError("axis out of range");
        return shape_[i];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& at(std::size_t i) {
        check_rank(1);
        check_bound(i, shape_[0]);
        return data_[i];
    }
    double at(std::size_t i) const { return const_cast<Tensor*>(this)->at(i); }

    double& at(std::size_t i, std::size_t j) {
        check_rank(2);
        check_bound(i, shape_[0]);
        check_bound(j, shape_[1]);
        return data_[i * shape_[1] + j];
    }
    double at(std::size_t i, std::size_t j) const {
        return const_cast<Tensor*>(this)->at(i, j);
    }

    double& at(std::size_t i, std::size_t j, std::size_t k) {
        check_rank(3);
        check_bound(i, shape_[0]);
        check_bound(j, shape_[1]);
        check_bound(k, shape_[2]);
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return const_cast<Tensor*>(this)->at(i, j, k);
    }

    // Unchecked linear access for inner loops.
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape_.size(); ++i)
            os << (i ? "x" : "") << shape_[i];
        os << "]";
        return os.str();
    }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        if (shape.empty() || shape.size() > 3)
            throw DimensionError("tensor rank must be 1..3");
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
    void check_rank(std::size_t r) const {
        if (shape_.size() != r)
            throw DimensionError("rank mismatch: tensor is " + shape_str());
    }
    static void check_bound(std::size_t i, std::size_t n) {
        if (i >= n) throw DimensionError("index out of bounds");
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul shape mismatch: " + a.shape_str() + " x " +
                             b.shape_str());
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    // i-k-j order keeps the b rows streaming.
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c.data() + i * n;
        const double* arow = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

// y = W^T x  for W[r x c], x[r] -> y[c]; the transposed product BPTT needs.
inline void matvec_transposed_accum(const Tensor& w, const double* x, double* y) {
    const std::size_t r = w.dim(0), c = w.dim(1);
    for (std::size_t i = 0; i < r; ++i) {
        const double xi = x[i];
        const double* wrow = w.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) y[j] += xi * wrow[j];
    }
}

// y += x W  for x[r], W[r x c] viewed as row vector times matrix.
inline void vecmat_accum(const double* x, const Tensor& w, double* y) {
    matvec_transposed_accum(w, x, y);
}

// y += W x  for W[r x c], x[c].
inline void matvec_accum(const Tensor& w, const double* x, double* y) {
    const std::size_t r = w.dim(0), c = w.dim(1);
    for (std::size_t i = 0; i < r; ++i) {
        const double* wrow = w.data() + i * c;
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += wrow[j] * x[j];
        y[i] += acc;
    }
}

inline double l2_norm(const Tensor& v) {
    if (v.rank() != 1) throw DimensionError("l2_norm expects rank-1 tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * v[i];
    return std::sqrt(s);
}

inline double l2_norm(const double* v, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
    return std::sqrt(s);
}

inline double l1_norm(const double* v, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::fabs(v[i]);
    return s;
}

inline Tensor uniform_init(Rng& rng, std::vector<std::size_t> shape, double lo,
                           double hi) {
    if (!(lo < hi)) throw ParameterError("uniform_init requires lo < hi");
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

inline Tensor identity_init(std::size_t n) {
    if (n < 1) throw ParameterError("identity_init requires n >= 1");
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

} // namespace normstab
