#include "varigrad/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>

#include "varigrad/errors.hpp"

namespace varigrad {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset) {
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t value) {
    const unsigned char bytes[4] = {static_cast<unsigned char>(value >> 24),
                                    static_cast<unsigned char>(value >> 16),
                                    static_cast<unsigned char>(value >> 8),
                                    static_cast<unsigned char>(value)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::string hex32(std::uint32_t value) {
    char buffer[16];
    std::snprintf(buffer, sizeof buffer, "0x%08X", value);
    return buffer;
}

void check_magic(std::uint32_t observed, std::uint32_t expected,
                 const std::filesystem::path& path) {
    if (observed != expected) {
        throw FormatError(path.string() + ": bad IDX magic " + hex32(observed) + ", expected " +
                          hex32(expected));
    }
}

}  // namespace

void validate_dataset(const Dataset& data) {
    if (data.y.size() != data.X.rows()) {
        throw ConsistencyError(data.name + ": " + std::to_string(data.X.rows()) + " rows but " +
                               std::to_string(data.y.size()) + " labels");
    }
    for (std::size_t i = 0; i < data.y.size(); ++i) {
        if (data.y[i] < 0 || static_cast<std::size_t>(data.y[i]) >= data.classes) {
            throw ConsistencyError(data.name + ": label " + std::to_string(data.y[i]) +
                                   " at row " + std::to_string(i) + " outside [0, " +
                                   std::to_string(data.classes) + ")");
        }
    }
    if (!all_finite(data.X)) throw ConsistencyError(data.name + ": non-finite feature value");
}

Dataset slice(const Dataset& data, std::size_t begin, std::size_t end) {
    if (begin > end || end > data.size()) {
        throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") of a dataset with " + std::to_string(data.size()) + " rows");
    }
    std::vector<std::size_t> indices(end - begin);
    std::iota(indices.begin(), indices.end(), begin);
    return select(data, indices);
}

Dataset select(const Dataset& data, std::span<const std::size_t> indices) {
    Dataset out;
    out.X = gather_rows(data.X, indices);
    out.y.reserve(indices.size());
    for (std::size_t i : indices) out.y.push_back(data.y[i]);
    out.name = data.name;
    out.classes = data.classes;
    return out;
}

Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path, std::size_t classes) {
    const auto images = read_file(images_path);
    if (images.size() < 16) throw IoError(images_path.string() + ": truncated IDX header");
    check_magic(read_be32(images, 0), kImageMagic, images_path);
    const std::size_t count = read_be32(images, 4);
    const std::size_t rows = read_be32(images, 8);
    const std::size_t cols = read_be32(images, 12);
    const std::size_t pixels = rows * cols;
    if (images.size() < 16 + count * pixels) {
        throw IoError(images_path.string() + ": truncated, expected " +
                      std::to_string(count) + " images of " + std::to_string(pixels) +
                      " bytes");
    }

    const auto labels = read_file(labels_path);
    if (labels.size() < 8) throw IoError(labels_path.string() + ": truncated IDX header");
    check_magic(read_be32(labels, 0), kLabelMagic, labels_path);
    const std::size_t label_count = read_be32(labels, 4);
    if (label_count != count) {
        throw ConsistencyError(images_path.string() + " has " + std::to_string(count) +
                               " images but " + labels_path.string() + " has " +
                               std::to_string(label_count) + " labels");
    }
    if (labels.size() < 8 + count) {
        throw IoError(labels_path.string() + ": truncated, expected " + std::to_string(count) +
                      " labels");
    }

    Dataset data;
    data.name = "mnist";
    data.classes = classes;
    data.X = Matrix(count, pixels);
    for (std::size_t i = 0; i < count * pixels; ++i) data.X[i] = images[16 + i] / 255.0;
    data.y.resize(count);
    for (std::size_t i = 0; i < count; ++i) data.y[i] = labels[8 + i];
    validate_dataset(data);
    return data;
}

void write_mnist_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path, const Dataset& data,
                     std::size_t image_rows, std::size_t image_cols) {
    if (image_rows * image_cols != data.dim()) {
        throw ShapeError("write_mnist_idx: " + std::to_string(image_rows) + "x" +
                         std::to_string(image_cols) + " images do not hold " +
                         std::to_string(data.dim()) + " features");
    }
    std::ofstream images(images_path, std::ios::binary);
    std::ofstream labels(labels_path, std::ios::binary);
    if (!images || !labels) throw IoError("cannot write IDX files next to " + images_path.string());
    put_be32(images, kImageMagic);
    put_be32(images, static_cast<std::uint32_t>(data.size()));
    put_be32(images, static_cast<std::uint32_t>(image_rows));
    put_be32(images, static_cast<std::uint32_t>(image_cols));
    for (double v : data.X.values()) {
        const double level = std::clamp(std::round(v * 255.0), 0.0, 255.0);
        images.put(static_cast<char>(static_cast<unsigned char>(level)));
    }
    put_be32(labels, kLabelMagic);
    put_be32(labels, static_cast<std::uint32_t>(data.size()));
    for (int label : data.y) labels.put(static_cast<char>(static_cast<unsigned char>(label)));
    if (!images || !labels) throw IoError("write failed for " + images_path.string());
}

Dataset synthetic_gaussian_classes(std::size_t n_per_class, std::size_t d, std::size_t c,
                                   double separation, std::uint64_t seed) {
    if (n_per_class == 0 || d == 0 || c == 0) {
        throw ConfigError("synthetic dataset needs positive n_per_class, d and c");
    }
    const std::size_t n = n_per_class * c;
    Dataset data;
    data.name = "synthetic";
    data.classes = c;
    data.X = Matrix(n, d);
    data.y.resize(n);
    RngStream rng(seed, 0);
    rng.fill_normal(data.X.values());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i % c;
        data.y[i] = static_cast<int>(k);
        data.X(i, k % d) += separation * static_cast<double>(1 + k / d);
    }
    return data;
}

MinibatchSampler::MinibatchSampler(std::size_t dataset_size, std::size_t batch_size,
                                   bool with_replacement, RngStream rng)
    : dataset_size_(dataset_size),
      batch_size_(batch_size),
      with_replacement_(with_replacement),
      rng_(rng) {
    if (dataset_size == 0) throw ConfigError("sampler: empty dataset");
    if (batch_size == 0) throw ConfigError("sampler: minibatch size M must be positive");
    if (!with_replacement && batch_size > dataset_size) {
        throw ConfigError("sampler: M = " + std::to_string(batch_size) +
                          " exceeds dataset size " + std::to_string(dataset_size) +
                          " when sampling without replacement");
    }
    if (!with_replacement) {
        permutation_.resize(dataset_size);
        reshuffle();
    }
}

void MinibatchSampler::reshuffle() {
    std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
    for (std::size_t i = permutation_.size(); i > 1; --i) {
        std::swap(permutation_[i - 1], permutation_[rng_.uniform_index(i)]);
    }
    cursor_ = 0;
}

std::vector<std::size_t> MinibatchSampler::next_indices() {
    std::vector<std::size_t> indices;
    if (with_replacement_) {
        indices.reserve(batch_size_);
        for (std::size_t m = 0; m < batch_size_; ++m)
            indices.push_back(rng_.uniform_index(dataset_size_));
        return indices;
    }
    if (cursor_ == dataset_size_) reshuffle();
    const std::size_t end = std::min(cursor_ + batch_size_, dataset_size_);
    indices.assign(permutation_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                   permutation_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end;
    return indices;
}

Batch MinibatchSampler::next_batch(const Dataset& data) {
    if (data.size() != dataset_size_) {
        throw ShapeError("sampler built for " + std::to_string(dataset_size_) +
                         " rows used with a dataset of " + std::to_string(data.size()));
    }
    Batch batch;
    batch.indices = next_indices();
    batch.X = gather_rows(data.X, batch.indices);
    batch.y.reserve(batch.indices.size());
    for (std::size_t i : batch.indices) batch.y.push_back(data.y[i]);
    return batch;
}

std::size_t MinibatchSampler::batches_per_epoch() const {
    return (dataset_size_ + batch_size_ - 1) / batch_size_;
}

}  // namespace varigrad
