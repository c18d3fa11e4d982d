#ifndef SAG_TENSOR_HPP
#define SAG_TENSOR_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sag {

/**
 * Dense row-major matrix of doubles.
 *
 * Everything in the engine is rank two: column vectors are n-by-1, scalars
 * are 1-by-1.  Keeping a single shape class removes an entire family of
 * rank-promotion bugs at the cost of writing (r, c) for vector access.
 */
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data_[0] = v;
        return t;
    }

    /// n-by-1 column from a flat list.
    static Tensor column(std::span<const double> values);

    /// 1-by-n row from a flat list.
    static Tensor row(std::span<const double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) {
        return data_[r * cols_ + c];
    }
    double operator()(std::size_t r, std::size_t c) const {
        return data_[r * cols_ + c];
    }
    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const Tensor& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

    /// Value of a 1-by-1 tensor; throws NotScalar otherwise.
    double scalar_value() const;

    void fill(double v);
    bool all_finite() const;

    /// "3x4" style shape string for error messages.
    std::string shape_str() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Plain (non-recorded) tensor math, used for host-side bookkeeping such as
// optimizer state and cached hidden states.  The recorded versions live on
// the Tape.
// ---------------------------------------------------------------------------

/// C = A * B with the usual (m,k)x(k,n) shape rule.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise sum; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);

}  // namespace sag

#endif  // SAG_TENSOR_HPP
