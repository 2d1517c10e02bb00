#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mit/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

using namespace mit;
namespace fs = std::filesystem;

namespace {

// tiny config that generates in well under a second
DatasetConfig tiny_config() {
    DatasetConfig c = DatasetConfig::desk_scale();
    for (auto& s : c.shapes) s.step_mm = 40.0;
    c.shapes.resize(2);
    c.split = {0.6, 0.2, 0.2};
    c.seed = 7;
    return c;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("enumerate_positions matches a brute-force oracle") {
    const double step = 4.0;
    const auto positions = enumerate_positions(30.0, step);

    // independent enumeration: scan a generous integer grid with the
    // point-in-disk test
    std::set<std::pair<long, long>> oracle;
    for (long i = -60; i <= 60; ++i)
        for (long j = -60; j <= 60; ++j) {
            const double x = i * step, y = j * step;
            if (std::sqrt(x * x + y * y) + 15.0 <= 100.0) oracle.insert({i, j});
        }
    CHECK(positions.size() == oracle.size());
    for (const auto& p : positions) {
        const long i = std::lround(p.x / step), j = std::lround(p.y / step);
        CHECK(oracle.count({i, j}) == 1);
    }
}

TEST_CASE("huge step leaves only the origin") {
    const auto positions = enumerate_positions(30.0, 500.0);
    REQUIRE(positions.size() == 1);
    CHECK(positions[0].x == 0.0);
    CHECK(positions[0].y == 0.0);

    // a phantom that cannot fit anywhere yields no positions
    const auto none = enumerate_positions(250.0, 500.0);
    CHECK(none.empty());

    CHECK_THROWS_AS(enumerate_positions(30.0, 0.0), std::invalid_argument);
}

TEST_CASE("generate: count arithmetic, determinism, and zero diagonals") {
    const DatasetConfig cfg = tiny_config();
    const Dataset ds = generate(cfg);

    // shape x position x repetition arithmetic
    std::size_t expected = 0;
    for (const auto& s : cfg.shapes) {
        Phantom proto{s.shape, s.size_mm, s.conductivity, {0, 0}, 0.0};
        expected += enumerate_positions(proto, s.step_mm).size() * s.repetitions;
    }
    CHECK(ds.samples.size() == expected);

    for (const auto& s : ds.samples) {
        CHECK(s.frame.all_finite());
        for (int e = 0; e < 16; ++e) CHECK(s.frame.at(e, e) == Complex(0.0, 0.0));
        CHECK(s.label.size() == 512);
    }

    // repetitions of one position differ only in noise
    const Dataset again = generate(cfg);
    REQUIRE(again.samples.size() == ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        CHECK(again.samples[i].frame.m == ds.samples[i].frame.m);
}

TEST_CASE("save/load round-trips bit-exactly") {
    const fs::path dir = fs::temp_directory_path() / "mit_dataset_test";
    fs::remove_all(dir);

    const Dataset ds = generate(tiny_config());
    save_dataset(ds, dir);
    const auto bytes1 = slurp(dir / "dataset.mitd");

    const Dataset loaded = load_dataset(dir);
    REQUIRE(loaded.samples.size() == ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        // frames are stored as f32, so compare at storage precision
        const auto& a = loaded.samples[i];
        const auto& b = ds.samples[i];
        for (int k = 0; k < 256; ++k) {
            CHECK(a.frame.m[k].real() == static_cast<float>(b.frame.m[k].real()));
            CHECK(a.frame.m[k].imag() == static_cast<float>(b.frame.m[k].imag()));
        }
        CHECK(a.label == b.label);
        CHECK(a.shape_index == b.shape_index);
        CHECK(a.position_index == b.position_index);
        CHECK(a.repetition == b.repetition);
    }
    CHECK(loaded.manifest.train_indices == ds.manifest.train_indices);
    CHECK(loaded.manifest.val_indices == ds.manifest.val_indices);
    CHECK(loaded.manifest.test_indices == ds.manifest.test_indices);

    save_dataset(loaded, dir);
    CHECK(slurp(dir / "dataset.mitd") == bytes1);
    fs::remove_all(dir);
}

TEST_CASE("splits partition positions with no leakage") {
    Dataset ds = generate(tiny_config());
    const auto& m = ds.manifest;
    CHECK(m.train_indices.size() + m.val_indices.size() + m.test_indices.size() ==
          ds.samples.size());

    auto position_keys = [&](const std::vector<std::uint32_t>& idx) {
        std::set<std::pair<int, int>> keys;
        for (auto i : idx)
            keys.insert({ds.samples[i].shape_index, ds.samples[i].position_index});
        return keys;
    };
    const auto train_keys = position_keys(m.train_indices);
    const auto val_keys = position_keys(m.val_indices);
    const auto test_keys = position_keys(m.test_indices);
    for (const auto& k : val_keys) CHECK(train_keys.count(k) == 0);
    for (const auto& k : test_keys) {
        CHECK(train_keys.count(k) == 0);
        CHECK(val_keys.count(k) == 0);
    }

    // same seed -> same split; ratios are honored at the position level
    Dataset ds2 = ds;
    split_by_position(ds2, ds.manifest.config.split, ds.manifest.config.seed);
    CHECK(ds2.manifest.train_indices == m.train_indices);

    const std::size_t P = train_keys.size() + val_keys.size() + test_keys.size();
    CHECK(val_keys.size() == static_cast<std::size_t>(std::llround(0.2 * P)));
    CHECK(test_keys.size() == static_cast<std::size_t>(std::llround(0.2 * P)));

    CHECK_THROWS_AS(split_by_position(ds2, {0.5, 0.2, 0.2}, 1), std::invalid_argument);
}

TEST_CASE("flatten/unflatten are exact inverses with the documented layout") {
    ComplexFrame f;
    for (int e = 0; e < 16; ++e)
        for (int s = 0; s < 16; ++s)
            if (e != s) f.at(e, s) = Complex(1.0, 2.0);

    const Tensor<double> m = flatten(f);
    REQUIRE(m.dim(0) == 16);
    REQUIRE(m.dim(1) == 32);
    for (int e = 0; e < 16; ++e)
        for (int c = 0; c < 16; ++c) {
            CHECK(m.at2(e, c) == (e == c ? 0.0 : 1.0));
            CHECK(m.at2(e, c + 16) == (e == c ? 0.0 : 2.0));
        }

    const ComplexFrame back = unflatten(m);
    CHECK(back.m == f.m);

    // purely real frame -> right half zero
    ComplexFrame real_frame;
    real_frame.at(2, 3) = Complex(5.0, 0.0);
    const Tensor<double> mr = flatten(real_frame);
    for (int e = 0; e < 16; ++e)
        for (int c = 16; c < 32; ++c) CHECK(mr.at2(e, c) == 0.0);

    // flatten(unflatten(m)) is the identity on any 16x32 matrix
    Tensor<double> arbitrary({16, 32});
    for (std::size_t i = 0; i < arbitrary.numel(); ++i) arbitrary[i] = 0.37 * (double)i - 40.0;
    const Tensor<double> round = flatten(unflatten(arbitrary));
    for (std::size_t i = 0; i < arbitrary.numel(); ++i) CHECK(round[i] == arbitrary[i]);

    Tensor<double> bad({16, 31});
    CHECK_THROWS_AS(unflatten(bad), std::invalid_argument);
}

TEST_CASE("config JSON round-trip and error naming") {
    const DatasetConfig c = DatasetConfig::desk_scale();
    const DatasetConfig back = dataset_config_from_json(dataset_config_to_json(c));
    CHECK(back.shapes.size() == c.shapes.size());
    CHECK(back.snr_db == c.snr_db);
    CHECK(back.seed == c.seed);
    CHECK(back.split.train == c.split.train);

    try {
        dataset_config_from_json(R"({"shapes": [{"shape": "cylinder", "size_mm": 30}]})");
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("conductivity") != std::string::npos);
    }
}

TEST_CASE("shape class names") {
    CHECK(shape_class_name({PhantomShape::cylinder, 35.0, 3.0, {0, 0}, 0.0}) == "CY-35");
    CHECK(shape_class_name({PhantomShape::cylinder, 30.0, 2.0, {0, 0}, 0.0}) == "CY-30");
    CHECK(shape_class_name({PhantomShape::triangular_prism, 40.0, 2.0, {0, 0}, 0.0}) == "PR");
}
