#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "varigrad/matrix.hpp"
#include "varigrad/rng.hpp"

namespace varigrad {

/// Labelled classification data: X is N×D, y holds N class indices in [0, classes).
struct Dataset {
    Matrix X;
    std::vector<int> y;
    std::string name;
    std::size_t classes = 0;

    std::size_t size() const { return X.rows(); }
    std::size_t dim() const { return X.cols(); }
};

/// Throws ConsistencyError when labels are out of range or counts disagree.
void validate_dataset(const Dataset& data);

/// Rows [begin, end) as a new dataset.
Dataset slice(const Dataset& data, std::size_t begin, std::size_t end);
/// Rows at the given indices, in order.
Dataset select(const Dataset& data, std::span<const std::size_t> indices);

/// Reads an IDX image file (magic 0x00000803) and label file (magic 0x00000801).
/// Pixels are divided by 255.
Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path, std::size_t classes = 10);

/// Writes IDX image and label files; pixel values are round(255 * x) clamped to [0, 255].
void write_mnist_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path, const Dataset& data,
                     std::size_t image_rows, std::size_t image_cols);

/// c Gaussian clusters in d dimensions with unit covariance. Point i belongs to class i % c;
/// class k is centred at separation * (1 + floor(k / d)) on axis k mod d.
Dataset synthetic_gaussian_classes(std::size_t n_per_class, std::size_t d, std::size_t c,
                                   double separation, std::uint64_t seed);

struct Batch {
    Matrix X;
    std::vector<int> y;
    std::vector<std::size_t> indices;
};

/// Draws minibatch indices with replacement (i.i.d. uniform) or without replacement
/// (consecutive slices of a per-epoch permutation; the final slice of an epoch may be short).
class MinibatchSampler {
public:
    MinibatchSampler(std::size_t dataset_size, std::size_t batch_size, bool with_replacement,
                     RngStream rng);

    std::vector<std::size_t> next_indices();
    Batch next_batch(const Dataset& data);

    std::size_t batch_size() const { return batch_size_; }
    bool with_replacement() const { return with_replacement_; }
    /// Number of batches that make up one pass over the data.
    std::size_t batches_per_epoch() const;

private:
    void reshuffle();

    std::size_t dataset_size_;
    std::size_t batch_size_;
    bool with_replacement_;
    RngStream rng_;
    std::vector<std::size_t> permutation_;
    std::size_t cursor_ = 0;
};

}  // namespace varigrad
