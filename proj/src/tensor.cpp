#include "sag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sag/errors.hpp"

namespace sag {

Tensor Tensor::column(std::span<const double> values) {
    Tensor t(values.size(), 1);
    std::copy(values.begin(), values.end(), t.data_.begin());
    return t;
}

Tensor Tensor::row(std::span<const double> values) {
    Tensor t(1, values.size());
    std::copy(values.begin(), values.end(), t.data_.begin());
    return t;
}

double Tensor::scalar_value() const {
    if (!is_scalar()) {
        throw NotScalar("expected a 1x1 tensor, got " + shape_str());
    }
    return data_[0];
}

void Tensor::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw ShapeMismatch("matmul: " + a.shape_str() + " * " + b.shape_str());
    }
    Tensor c(a.rows(), b.cols());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = pa[i * k + kk];
            if (aik == 0.0) continue;
            const double* brow = pb + kk * n;
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeMismatch("add: " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

}  // namespace sag
