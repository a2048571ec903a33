#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "varigrad/data.hpp"
#include "varigrad/errors.hpp"
#include "varigrad/model.hpp"
#include "varigrad/optimizer.hpp"

using namespace varigrad;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("varigrad_data_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
    return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

std::vector<unsigned char> image_file(std::uint32_t magic, std::uint32_t count, std::uint32_t rows,
                                      std::uint32_t cols, std::size_t pixel_bytes) {
    std::vector<unsigned char> out;
    for (auto v : {magic, count, rows, cols}) {
        const auto b = be32(v);
        out.insert(out.end(), b.begin(), b.end());
    }
    out.resize(out.size() + pixel_bytes, 0);
    return out;
}

std::vector<unsigned char> label_file(std::uint32_t magic, const std::vector<unsigned char>& labels) {
    std::vector<unsigned char> out = be32(magic);
    const auto n = be32(static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), n.begin(), n.end());
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

// Plain softmax regression trained with Adam; returns accuracy on `eval`.
double linear_accuracy(const Dataset& train, const Dataset& eval, std::size_t steps, double lr) {
    RngStream init(1, 0);
    Mlp model = Mlp::build({{train.dim(), train.classes}}, init);
    AdamConfig config;
    config.step_size = lr;
    Adam adam(config);
    const auto slots = model.parameter_slots();
    MinibatchSampler sampler(train.size(), 32, true, RngStream(2, 0));
    RngStream noise(3, 0);
    ElboOptions options;
    options.mode = EstimatorMode::NoNoise;
    options.dataset_size = train.size();
    for (std::size_t s = 0; s < steps; ++s) {
        const Batch b = sampler.next_batch(train);
        const auto r = elbo_minibatch(model, b.X, b.y, options, noise);
        adam.step(slots, gradient_slots(model, r.gradients));
    }
    return 1.0 - classification_error(model, eval.X, eval.y, PredictionMode::mean_weights());
}

}  // namespace

TEST_CASE("a zero-pixel image file loads as all-zero rows") {
    TempDir dir("zero");
    write_bytes(dir.path / "img", image_file(0x803, 2, 28, 28, 2 * 784));
    write_bytes(dir.path / "lbl", label_file(0x801, {9, 0}));
    const Dataset data = load_mnist_idx(dir.path / "img", dir.path / "lbl");
    CHECK(data.size() == 2);
    CHECK(data.dim() == 784);
    CHECK(data.X == Matrix(2, 784));
    CHECK(data.y == std::vector<int>{9, 0});
}

TEST_CASE("pixels are scaled by 1/255") {
    TempDir dir("scale");
    auto img = image_file(0x803, 1, 1, 3, 0);
    img.insert(img.end(), {0, 51, 255});
    write_bytes(dir.path / "img", img);
    write_bytes(dir.path / "lbl", label_file(0x801, {3}));
    const Dataset data = load_mnist_idx(dir.path / "img", dir.path / "lbl");
    CHECK(data.X == Matrix::from_rows({{0.0, 51 / 255.0, 1.0}}));
}

TEST_CASE("corrupted files are rejected with specific errors") {
    TempDir dir("corrupt");
    const auto good_img = image_file(0x803, 2, 2, 2, 8);
    write_bytes(dir.path / "img", good_img);
    write_bytes(dir.path / "lbl", label_file(0x801, {1, 2}));

    SUBCASE("bad image magic names the observed value") {
        write_bytes(dir.path / "img", image_file(0x804, 2, 2, 2, 8));
        try {
            load_mnist_idx(dir.path / "img", dir.path / "lbl");
            FAIL("expected a format error");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("0x00000804") != std::string::npos);
        }
    }
    SUBCASE("bad label magic") {
        write_bytes(dir.path / "lbl", label_file(0x803, {1, 2}));
        CHECK_THROWS_AS(load_mnist_idx(dir.path / "img", dir.path / "lbl"), FormatError);
    }
    SUBCASE("label out of range") {
        write_bytes(dir.path / "lbl", label_file(0x801, {1, 10}));
        CHECK_THROWS_AS(load_mnist_idx(dir.path / "img", dir.path / "lbl"), ConsistencyError);
    }
    SUBCASE("count mismatch") {
        write_bytes(dir.path / "lbl", label_file(0x801, {1, 2, 3}));
        CHECK_THROWS_AS(load_mnist_idx(dir.path / "img", dir.path / "lbl"), ConsistencyError);
    }
    SUBCASE("truncated pixels") {
        auto cut = good_img;
        cut.pop_back();
        write_bytes(dir.path / "img", cut);
        CHECK_THROWS_AS(load_mnist_idx(dir.path / "img", dir.path / "lbl"), IoError);
    }
    SUBCASE("truncated header") {
        write_bytes(dir.path / "img", {0, 0, 8, 3, 0, 0});
        CHECK_THROWS_AS(load_mnist_idx(dir.path / "img", dir.path / "lbl"), IoError);
    }
    SUBCASE("truncated labels") {
        auto lbl = label_file(0x801, {1, 2});
        lbl.pop_back();
        write_bytes(dir.path / "lbl", lbl);
        CHECK_THROWS_AS(load_mnist_idx(dir.path / "img", dir.path / "lbl"), IoError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_mnist_idx(dir.path / "nope", dir.path / "lbl"), IoError);
    }
}

TEST_CASE("written IDX files reload bit for bit") {
    TempDir dir("roundtrip");
    Dataset data;
    data.classes = 10;
    data.X = Matrix(3, 12);
    for (std::size_t i = 0; i < data.X.size(); ++i) data.X[i] = static_cast<double>((i * 37) % 256) / 255.0;
    data.y = {3, 7, 9};
    write_mnist_idx(dir.path / "img", dir.path / "lbl", data, 3, 4);
    const Dataset back = load_mnist_idx(dir.path / "img", dir.path / "lbl");
    CHECK(back.X == data.X);
    CHECK(back.y == data.y);
}

TEST_CASE("synthetic data is deterministic per seed") {
    const Dataset a = synthetic_gaussian_classes(20, 5, 3, 2.0, 42);
    const Dataset b = synthetic_gaussian_classes(20, 5, 3, 2.0, 42);
    const Dataset c = synthetic_gaussian_classes(20, 5, 3, 2.0, 43);
    CHECK(a.X == b.X);
    CHECK(a.y == b.y);
    CHECK_FALSE(a.X == c.X);
    CHECK(a.size() == 60);
    CHECK(a.classes == 3);
    CHECK(a.y[4] == 1);
    CHECK_NOTHROW(validate_dataset(a));
}

TEST_CASE("indistinguishable classes keep a linear model at chance") {
    const Dataset train = synthetic_gaussian_classes(250, 2, 4, 0.0, 5);
    const Dataset test = synthetic_gaussian_classes(1000, 2, 4, 0.0, 6);
    const double accuracy = linear_accuracy(train, test, 400, 1e-2);
    CHECK(std::abs(accuracy - 0.25) < 0.05);
}

TEST_CASE("well-separated classes are learned quickly") {
    const Dataset train = synthetic_gaussian_classes(200, 2, 2, 10.0, 7);
    CHECK(linear_accuracy(train, train, 199, 1e-2) > 0.99);
}

TEST_CASE("full batch without replacement is a permutation") {
    MinibatchSampler sampler(9, 9, false, RngStream(1, 0));
    auto idx = sampler.next_indices();
    std::sort(idx.begin(), idx.end());
    std::vector<std::size_t> expected(9);
    std::iota(expected.begin(), expected.end(), std::size_t{0});
    CHECK(idx == expected);
}

TEST_CASE("one epoch without replacement covers the data once") {
    MinibatchSampler sampler(10, 3, false, RngStream(2, 0));
    CHECK(sampler.batches_per_epoch() == 4);
    for (int epoch = 0; epoch < 3; ++epoch) {
        std::vector<std::size_t> all;
        std::vector<std::size_t> sizes;
        for (std::size_t b = 0; b < 4; ++b) {
            const auto idx = sampler.next_indices();
            sizes.push_back(idx.size());
            all.insert(all.end(), idx.begin(), idx.end());
        }
        CHECK(sizes == std::vector<std::size_t>{3, 3, 3, 1});
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == i);
    }
}

TEST_CASE("duplicate frequency with replacement matches the combinatorial value") {
    MinibatchSampler sampler(4, 4, true, RngStream(3, 0));
    const int trials = 10'000;
    int with_duplicates = 0;
    for (int t = 0; t < trials; ++t) {
        const auto idx = sampler.next_indices();
        if (std::set<std::size_t>(idx.begin(), idx.end()).size() < 4) ++with_duplicates;
    }
    const double expected = 1.0 - 24.0 / 256.0;
    CHECK(std::abs(static_cast<double>(with_duplicates) / trials - expected) < 0.015);
}

TEST_CASE("samplers are deterministic and validate their configuration") {
    MinibatchSampler a(50, 7, true, RngStream(4, 0));
    MinibatchSampler b(50, 7, true, RngStream(4, 0));
    for (int i = 0; i < 5; ++i) CHECK(a.next_indices() == b.next_indices());
    CHECK_THROWS_AS(MinibatchSampler(5, 6, false, RngStream(1, 0)), ConfigError);
    CHECK_NOTHROW(MinibatchSampler(5, 6, true, RngStream(1, 0)));
}

TEST_CASE("batches gather rows and labels") {
    const Dataset data = synthetic_gaussian_classes(5, 3, 2, 1.0, 9);
    MinibatchSampler sampler(data.size(), 4, false, RngStream(5, 0));
    const Batch batch = sampler.next_batch(data);
    for (std::size_t m = 0; m < 4; ++m) {
        CHECK(batch.y[m] == data.y[batch.indices[m]]);
        for (std::size_t k = 0; k < 3; ++k) CHECK(batch.X(m, k) == data.X(batch.indices[m], k));
    }
}
