#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dib/tensor.hpp"

namespace dib {

// Labeled example set. `ids` carry original-index provenance: a base dataset
// has ids 0..m-1 and every subset or resample keeps the ids of the rows it
// drew, which is what the set-overlap diagnostics run on.
template <typename Scalar>
struct Dataset {
    Tensor<Scalar> examples; // shape (n, example dims...)
    std::vector<int> labels;
    std::vector<std::int64_t> ids;
    int classes = 0;

    Index size() const { return examples.shape.empty() ? 0 : examples.dim(0); }

    Shape example_shape() const {
        return Shape(examples.shape.begin() + 1, examples.shape.end());
    }

    Index example_size() const { return size() == 0 ? 0 : examples.size() / size(); }

    Eigen::Map<const MatrixR<Scalar>> matrix() const {
        return examples.matrix(size(), example_size());
    }

    void validate() const {
        const Index n = size();
        if (static_cast<Index>(labels.size()) != n || static_cast<Index>(ids.size()) != n)
            throw ValueError("dataset: labels/ids lengths do not match example count");
        if (classes < 1) throw ValueError("dataset: class count must be >= 1");
        for (int y : labels)
            if (y < 0 || y >= classes) throw ValueError("dataset: label out of range");
    }

    Dataset gather(std::span<const Index> rows) const {
        Dataset out;
        Shape s = examples.shape;
        s[0] = static_cast<Index>(rows.size());
        out.examples = Tensor<Scalar>(s);
        out.labels.reserve(rows.size());
        out.ids.reserve(rows.size());
        out.classes = classes;
        const Index f = example_size();
        auto src = matrix();
        auto dst = out.examples.matrix(static_cast<Index>(rows.size()), f);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            dst.row(static_cast<Index>(i)) = src.row(rows[i]);
            out.labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
            out.ids.push_back(ids[static_cast<std::size_t>(rows[i])]);
        }
        return out;
    }
};

} // namespace dib
