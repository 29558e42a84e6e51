#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "dib/dataset.hpp"
#include "dib/rng.hpp"

namespace dib {

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IdxError(IdxError::Kind::Truncated, path + ": truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// MNIST-style IDX pair: big-endian headers, unsigned byte payloads. Pixels
// are scaled to [0,1] by 255; ids run 0..n-1.
template <typename Scalar>
Dataset<Scalar> load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IdxError(IdxError::Kind::Io, "cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IdxError(IdxError::Kind::Io, "cannot open " + labels_path);

    const std::uint32_t img_magic = detail::read_u32_be(img, images_path);
    if (img_magic != kIdxImagesMagic)
        throw IdxError(IdxError::Kind::BadMagic,
                       images_path + ": bad images magic " + std::to_string(img_magic));
    const std::uint32_t n = detail::read_u32_be(img, images_path);
    const std::uint32_t rows = detail::read_u32_be(img, images_path);
    const std::uint32_t cols = detail::read_u32_be(img, images_path);

    const std::uint32_t lab_magic = detail::read_u32_be(lab, labels_path);
    if (lab_magic != kIdxLabelsMagic)
        throw IdxError(IdxError::Kind::BadMagic,
                       labels_path + ": bad labels magic " + std::to_string(lab_magic));
    const std::uint32_t n_labels = detail::read_u32_be(lab, labels_path);
    if (n != n_labels)
        throw IdxError(IdxError::Kind::CountMismatch,
                       "image count " + std::to_string(n) + " != label count " +
                           std::to_string(n_labels));

    Dataset<Scalar> ds;
    ds.examples = Tensor<Scalar>({Index(n), 1, Index(rows), Index(cols)});
    const std::size_t pixels = std::size_t(n) * rows * cols;
    std::vector<unsigned char> buf(pixels);
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
    if (static_cast<std::size_t>(img.gcount()) != pixels)
        throw IdxError(IdxError::Kind::Truncated, images_path + ": truncated pixel data");
    for (std::size_t i = 0; i < pixels; ++i)
        ds.examples.data[static_cast<Index>(i)] = static_cast<Scalar>(buf[i]) / Scalar(255);

    std::vector<unsigned char> lbuf(n);
    lab.read(reinterpret_cast<char*>(lbuf.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(lab.gcount()) != n)
        throw IdxError(IdxError::Kind::Truncated, labels_path + ": truncated label data");

    ds.labels.resize(n);
    ds.ids.resize(n);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        ds.labels[i] = lbuf[i];
        ds.ids[i] = static_cast<std::int64_t>(i);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.classes = max_label + 1;
    return ds;
}

// Writes (n,1,R,C) datasets whose values are byte multiples of 1/255; the
// load/save pair round-trips bit-exactly.
template <typename Scalar>
void save_idx(const Dataset<Scalar>& ds, const std::string& images_path,
              const std::string& labels_path) {
    if (ds.examples.shape.size() != 4 || ds.examples.dim(1) != 1)
        throw ValueError("save_idx expects examples of shape (n,1,rows,cols)");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw IdxError(IdxError::Kind::Io, "cannot open " + images_path + " for write");
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw IdxError(IdxError::Kind::Io, "cannot open " + labels_path + " for write");

    const auto n = static_cast<std::uint32_t>(ds.size());
    detail::write_u32_be(img, kIdxImagesMagic);
    detail::write_u32_be(img, n);
    detail::write_u32_be(img, static_cast<std::uint32_t>(ds.examples.dim(2)));
    detail::write_u32_be(img, static_cast<std::uint32_t>(ds.examples.dim(3)));
    std::vector<unsigned char> buf(static_cast<std::size_t>(ds.examples.size()));
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const double v = static_cast<double>(ds.examples.data[static_cast<Index>(i)]) * 255.0;
        const long b = std::lround(v);
        if (b < 0 || b > 255) throw ValueError("save_idx: pixel outside [0,1]");
        buf[i] = static_cast<unsigned char>(b);
    }
    img.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));

    detail::write_u32_be(lab, kIdxLabelsMagic);
    detail::write_u32_be(lab, n);
    std::vector<unsigned char> lbuf(n);
    for (std::uint32_t i = 0; i < n; ++i) lbuf[i] = static_cast<unsigned char>(ds.labels[i]);
    lab.write(reinterpret_cast<const char*>(lbuf.data()), n);
}

// CIFAR-10 binary batches: records of one label byte + 3072 pixel bytes.
template <typename Scalar>
Dataset<Scalar> load_cifar10(const std::vector<std::string>& batch_paths) {
    constexpr std::size_t kRecord = 1 + 3072;
    std::vector<unsigned char> all;
    for (const auto& path : batch_paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IdxError(IdxError::Kind::Io, "cannot open " + path);
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
        if (bytes.empty() || bytes.size() % kRecord != 0)
            throw IdxError(IdxError::Kind::Truncated,
                           path + ": size is not a multiple of the 3073-byte record");
        all.insert(all.end(), bytes.begin(), bytes.end());
    }
    const Index n = static_cast<Index>(all.size() / kRecord);
    Dataset<Scalar> ds;
    ds.examples = Tensor<Scalar>({n, 3, 32, 32});
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.ids.resize(static_cast<std::size_t>(n));
    ds.classes = 10;
    for (Index i = 0; i < n; ++i) {
        const unsigned char* rec = all.data() + static_cast<std::size_t>(i) * kRecord;
        ds.labels[static_cast<std::size_t>(i)] = rec[0];
        ds.ids[static_cast<std::size_t>(i)] = i;
        for (Index p = 0; p < 3072; ++p)
            ds.examples.data[i * 3072 + p] = static_cast<Scalar>(rec[1 + p]) / Scalar(255);
    }
    return ds;
}

enum class SyntheticKind { TwoMoons, GaussianBlobs };

// Balanced per-class counts: first (n mod K) classes take one extra.
inline std::vector<Index> balanced_counts(Index n, int k) {
    std::vector<Index> counts(static_cast<std::size_t>(k), n / k);
    for (Index c = 0; c < n % k; ++c) counts[static_cast<std::size_t>(c)] += 1;
    return counts;
}

// Deterministic 2-d synthetic sets. two-moons is the classic interleaved
// half-circle pair (2 classes); gaussian-blobs puts K isotropic clusters on
// a radius-5 circle.
template <typename Scalar>
Dataset<Scalar> make_synthetic(SyntheticKind kind, Index n, int k, double noise,
                               std::uint64_t seed) {
    if (kind == SyntheticKind::TwoMoons && k != 2)
        throw ValueError("two-moons is a 2-class generator");
    if (k < 1 || n < k) throw ValueError("make_synthetic requires n >= K >= 1");

    Dataset<Scalar> ds;
    ds.examples = Tensor<Scalar>({n, 2});
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.ids.resize(static_cast<std::size_t>(n));
    ds.classes = k;
    Rng rng(derive_seed(seed, RngStream::Data));

    const auto counts = balanced_counts(n, k);
    Index row = 0;
    constexpr double kPi = 3.141592653589793238462643383279502884;
    for (int c = 0; c < k; ++c) {
        for (Index j = 0; j < counts[static_cast<std::size_t>(c)]; ++j, ++row) {
            double x, y;
            if (kind == SyntheticKind::TwoMoons) {
                const double theta = kPi * rng.uniform();
                if (c == 0) {
                    x = std::cos(theta);
                    y = std::sin(theta);
                } else {
                    x = 1.0 - std::cos(theta);
                    y = 0.5 - std::sin(theta);
                }
                x += noise * rng.normal();
                y += noise * rng.normal();
            } else {
                const double angle = 2.0 * kPi * c / k;
                x = 5.0 * std::cos(angle) + noise * rng.normal();
                y = 5.0 * std::sin(angle) + noise * rng.normal();
            }
            ds.examples.data[row * 2 + 0] = static_cast<Scalar>(x);
            ds.examples.data[row * 2 + 1] = static_cast<Scalar>(y);
            ds.labels[static_cast<std::size_t>(row)] = c;
            ds.ids[static_cast<std::size_t>(row)] = row;
        }
    }
    return ds;
}

namespace detail {

// Largest-remainder allocation of n_total into |fractions| buckets.
inline std::vector<Index> largest_remainder(Index n_total, const std::vector<double>& fractions) {
    std::vector<Index> counts(fractions.size());
    std::vector<std::pair<double, std::size_t>> rema(fractions.size());
    Index assigned = 0;
    for (std::size_t s = 0; s < fractions.size(); ++s) {
        const double exact = fractions[s] * static_cast<double>(n_total);
        counts[s] = static_cast<Index>(exact);
        rema[s] = {exact - static_cast<double>(counts[s]), s};
        assigned += counts[s];
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (Index i = 0; i < n_total - assigned; ++i)
        counts[rema[static_cast<std::size_t>(i)].second] += 1;
    return counts;
}

} // namespace detail

// Deterministic stratified partition. Per class, rows are shuffled and dealt
// to the splits by largest-remainder counts, so each split's per-class count
// is within one example of exact proportionality.
template <typename Scalar>
std::vector<Dataset<Scalar>> split(const Dataset<Scalar>& base,
                                   const std::vector<double>& fractions, std::uint64_t seed) {
    base.validate();
    double total = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw ValueError("split fractions must be positive");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValueError("split fractions must sum to 1");

    const std::size_t n_splits = fractions.size();
    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(base.classes));
    for (Index i = 0; i < base.size(); ++i)
        by_class[static_cast<std::size_t>(base.labels[static_cast<std::size_t>(i)])].push_back(i);

    Rng rng(derive_seed(seed, RngStream::Data));
    std::vector<std::vector<Index>> split_rows(n_splits);
    for (int c = 0; c < base.classes; ++c) {
        auto& rows = by_class[static_cast<std::size_t>(c)];
        const auto counts = detail::largest_remainder(static_cast<Index>(rows.size()), fractions);
        for (std::size_t s = 0; s < n_splits; ++s)
            if (counts[s] < 1)
                throw ValueError("split " + std::to_string(s) + " would receive no example of class " +
                                 std::to_string(c));
        rng.shuffle(rows);
        std::size_t pos = 0;
        for (std::size_t s = 0; s < n_splits; ++s) {
            for (Index j = 0; j < counts[s]; ++j)
                split_rows[s].push_back(rows[pos++]);
        }
    }

    std::vector<Dataset<Scalar>> out;
    out.reserve(n_splits);
    for (auto& rows : split_rows) {
        std::sort(rows.begin(), rows.end());
        out.push_back(base.gather(rows));
    }
    return out;
}

// Stratified subsample of exactly `count` examples (global largest-remainder
// over classes, so per-class counts stay within one of proportional).
template <typename Scalar>
Dataset<Scalar> stratified_subsample(const Dataset<Scalar>& base, Index count,
                                     std::uint64_t seed) {
    base.validate();
    if (count < 1 || count > base.size())
        throw ValueError("stratified_subsample: count out of range");

    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(base.classes));
    for (Index i = 0; i < base.size(); ++i)
        by_class[static_cast<std::size_t>(base.labels[static_cast<std::size_t>(i)])].push_back(i);

    std::vector<double> fractions(by_class.size());
    for (std::size_t c = 0; c < by_class.size(); ++c)
        fractions[c] = static_cast<double>(by_class[c].size()) / static_cast<double>(base.size());
    const auto counts = detail::largest_remainder(count, fractions);

    Rng rng(derive_seed(seed, RngStream::Data));
    std::vector<Index> rows;
    rows.reserve(static_cast<std::size_t>(count));
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& cls = by_class[c];
        if (counts[c] > static_cast<Index>(cls.size()))
            throw ValueError("stratified_subsample: class " + std::to_string(c) + " too small");
        rng.shuffle(cls);
        rows.insert(rows.end(), cls.begin(), cls.begin() + counts[c]);
    }
    std::sort(rows.begin(), rows.end());
    return base.gather(rows);
}

// Remove the rows whose ids appear in `taken` (complement within base).
template <typename Scalar>
Dataset<Scalar> remove_ids(const Dataset<Scalar>& base, const std::vector<std::int64_t>& taken) {
    std::vector<std::int64_t> sorted = taken;
    std::sort(sorted.begin(), sorted.end());
    std::vector<Index> rows;
    for (Index i = 0; i < base.size(); ++i)
        if (!std::binary_search(sorted.begin(), sorted.end(), base.ids[static_cast<std::size_t>(i)]))
            rows.push_back(i);
    return base.gather(rows);
}

} // namespace dib
