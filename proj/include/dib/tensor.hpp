#pragma once

#include <Eigen/Core>

#include <sstream>
#include <string>
#include <vector>

#include "dib/core.hpp"

namespace dib {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using MatrixR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

inline Index shape_size(const Shape& s) {
    Index n = 1;
    for (Index d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// Dense n-d value: a shape plus row-major flat storage. All math runs
// through Eigen maps onto the flat array.
template <typename Scalar>
struct Tensor {
    Shape shape;
    ArrayX<Scalar> data;

    Tensor() = default;

    explicit Tensor(Shape s) : shape(std::move(s)) {
        data = ArrayX<Scalar>::Zero(shape_size(shape));
    }

    Tensor(Shape s, ArrayX<Scalar> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != shape_size(shape))
            throw ShapeError("tensor data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    Index size() const { return data.size(); }
    Index dim(std::size_t i) const { return shape.at(i); }
    bool empty() const { return data.size() == 0; }

    bool is_finite() const { return data.isFinite().all(); }

    // (rows, cols) matrix view of the flat data; rows*cols must equal size()
    Eigen::Map<MatrixR<Scalar>> matrix(Index rows, Index cols) {
        return Eigen::Map<MatrixR<Scalar>>(data.data(), rows, cols);
    }
    Eigen::Map<const MatrixR<Scalar>> matrix(Index rows, Index cols) const {
        return Eigen::Map<const MatrixR<Scalar>>(data.data(), rows, cols);
    }

    Eigen::Map<VectorX<Scalar>> vector() {
        return Eigen::Map<VectorX<Scalar>>(data.data(), data.size());
    }
    Eigen::Map<const VectorX<Scalar>> vector() const {
        return Eigen::Map<const VectorX<Scalar>>(data.data(), data.size());
    }
};

template <typename Scalar>
bool bit_equal(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.shape != b.shape) return false;
    for (Index i = 0; i < a.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

// argmax with ties broken toward the lowest index
template <typename Derived>
Index argmax_lowest(const Eigen::DenseBase<Derived>& row) {
    Index best = 0;
    for (Index j = 1; j < row.size(); ++j)
        if (row(j) > row(best)) best = j;
    return best;
}

} // namespace dib
