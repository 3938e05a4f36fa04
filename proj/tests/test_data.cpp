#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "bfl/data.hpp"

using namespace bfl;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> image_file(std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                                     const std::vector<std::uint8_t>& pixels)
{
    std::vector<std::uint8_t> out;
    put_u32(out, kIdxImageMagic);
    put_u32(out, count);
    put_u32(out, rows);
    put_u32(out, cols);
    out.insert(out.end(), pixels.begin(), pixels.end());
    return out;
}

std::vector<std::uint8_t> label_file(const std::vector<std::uint8_t>& labels)
{
    std::vector<std::uint8_t> out;
    put_u32(out, kIdxLabelMagic);
    put_u32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

IdxErrorKind parse_error(const std::vector<std::uint8_t>& img, const std::vector<std::uint8_t>& lab)
{
    try {
        parse_idx(img, lab);
    } catch (const IdxError& e) {
        return e.kind();
    }
    FAIL("expected an IdxError");
    return IdxErrorKind::io;
}

Dataset balanced(std::size_t per_class, double spread = 0.5)
{
    const auto c = regular_polygon_centers(3);
    return make_toy_blobs(42, 3, per_class, c, spread);
}

}  // namespace

TEST_CASE("toy blobs: histogram, determinism and zero spread")
{
    const auto centers = regular_polygon_centers(3);
    const Dataset d = make_toy_blobs(1, 3, 10, centers, 0.6);
    CHECK(d.size() == 30);
    CHECK(d.class_histogram() == std::vector<std::size_t>{10, 10, 10});
    CHECK(d == make_toy_blobs(1, 3, 10, centers, 0.6));
    CHECK_FALSE(d == make_toy_blobs(2, 3, 10, centers, 0.6));

    const Dataset flat = make_toy_blobs(1, 3, 10, centers, 0.0);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const auto& c = centers[static_cast<std::size_t>(flat.labels[i])];
        CHECK(std::abs(flat.features(i, 0) - c[0]) <= 1e-12);
        CHECK(std::abs(flat.features(i, 1) - c[1]) <= 1e-12);
    }
}

TEST_CASE("polygon centres lie on the circle")
{
    const auto c = regular_polygon_centers(5, 2.0);
    REQUIRE(c.size() == 5);
    CHECK(c[0][0] == doctest::Approx(2.0));
    CHECK(c[0][1] == doctest::Approx(0.0));
    for (const auto& p : c) {
        CHECK(std::hypot(p[0], p[1]) == doctest::Approx(2.0));
    }
}

TEST_CASE("idx: hand-built pair parses to exact floats")
{
    std::vector<std::uint8_t> px(18);
    std::iota(px.begin(), px.end(), 0);
    px[0] = 255;
    px[17] = 51;
    const Dataset d = parse_idx(image_file(2, 3, 3, px), label_file({4, 1}));
    CHECK(d.size() == 2);
    CHECK(d.feature_dim() == 9);
    CHECK(d.num_classes == 5);
    CHECK(d.labels == std::vector<int>{4, 1});
    CHECK(d.features(0, 0) == 1.0);
    CHECK(d.features(0, 1) == 1.0 / 255.0);
    CHECK(d.features(1, 8) == 0.2);
    CHECK(d.features(1, 0) == 9.0 / 255.0);
}

TEST_CASE("idx: malformed inputs")
{
    const auto img = image_file(2, 3, 3, std::vector<std::uint8_t>(18, 7));
    const auto lab = label_file({0, 1});
    CHECK(parse_error({}, lab) == IdxErrorKind::truncated);
    CHECK(parse_error(img, {}) == IdxErrorKind::truncated);

    auto bad = img;
    bad[3] = 0x01;
    CHECK(parse_error(bad, lab) == IdxErrorKind::bad_magic);
    CHECK(parse_error(img, img) == IdxErrorKind::bad_magic);

    auto short_img = img;
    short_img.pop_back();
    CHECK(parse_error(short_img, lab) == IdxErrorKind::truncated);

    CHECK(parse_error(img, label_file({0, 1, 2})) == IdxErrorKind::count_mismatch);
}

TEST_CASE("idx: file loading")
{
    const auto dir = std::filesystem::temp_directory_path() / "bfl_idx_test";
    std::filesystem::create_directories(dir);
    const auto write = [](const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
        std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                 static_cast<std::streamsize>(bytes.size()));
    };
    write(dir / "img", image_file(1, 2, 2, {0, 255, 0, 255}));
    write(dir / "lab", label_file({1}));
    write(dir / "empty", {});
    const Dataset d = load_idx(dir / "img", dir / "lab");
    CHECK(d.features.values == std::vector<double>{0.0, 1.0, 0.0, 1.0});

    try {
        load_idx(dir / "empty", dir / "lab");
        FAIL("empty file accepted");
    } catch (const IdxError& e) {
        CHECK(e.kind() == IdxErrorKind::truncated);
    }
    try {
        load_idx(dir / "missing", dir / "lab");
        FAIL("missing file accepted");
    } catch (const IdxError& e) {
        CHECK(e.kind() == IdxErrorKind::io);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("partition: single client gets everything")
{
    const Dataset d = balanced(20);
    const auto parts = dirichlet_partition(d, {1, 0.5, 3});
    REQUIRE(parts.size() == 1);
    CHECK(parts[0].data.size() == d.size());
    CHECK(parts[0].data == d);
}

TEST_CASE("partition is exact: disjoint cover with no empty client")
{
    const Dataset d = balanced(100);
    for (double alpha : {0.05, 0.1, 1.0, 100.0}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto parts = dirichlet_partition(d, {20, alpha, seed});
            REQUIRE(parts.size() == 20);
            std::vector<int> seen(d.size(), 0);
            for (std::size_t c = 0; c < parts.size(); ++c) {
                CHECK(parts[c].client_id == c);
                CHECK_FALSE(parts[c].indices.empty());
                CHECK(std::is_sorted(parts[c].indices.begin(), parts[c].indices.end()));
                CHECK(parts[c].data.size() == parts[c].indices.size());
                for (std::size_t k = 0; k < parts[c].indices.size(); ++k) {
                    seen[parts[c].indices[k]] += 1;
                    CHECK(parts[c].data.labels[k] == d.labels[parts[c].indices[k]]);
                }
            }
            CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
        }
    }
}

TEST_CASE("partition: heterogeneity follows alpha")
{
    const Dataset d = balanced(1000);
    const auto iid = dirichlet_partition(d, {10, 100.0, 42});
    for (const auto& c : iid) {
        const auto h = c.data.class_histogram();
        const double n = static_cast<double>(c.data.size());
        for (auto count : h) {
            const double share = static_cast<double>(count) / n;
            CHECK(share >= (1.0 / 3.0) * 0.7);
            CHECK(share <= (1.0 / 3.0) * 1.3);
        }
    }
    const auto skewed = dirichlet_partition(d, {10, 0.1, 42});
    bool dominated = false;
    for (const auto& c : skewed) {
        const auto h = c.data.class_histogram();
        const auto top = *std::max_element(h.begin(), h.end());
        dominated = dominated || static_cast<double>(top) >= 0.7 * static_cast<double>(c.data.size());
    }
    CHECK(dominated);
}

TEST_CASE("partition: smaller alpha gives more skewed clients on average")
{
    const Dataset d = balanced(300);
    auto mean_top_share = [&](double alpha) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            for (const auto& c : dirichlet_partition(d, {10, alpha, seed})) {
                const auto h = c.data.class_histogram();
                total += static_cast<double>(*std::max_element(h.begin(), h.end())) /
                         static_cast<double>(c.data.size());
            }
        }
        return total / 50.0;
    };
    const double a = mean_top_share(0.1);
    const double b = mean_top_share(1.0);
    const double c = mean_top_share(100.0);
    CHECK(a > b);
    CHECK(b > c);
}

TEST_CASE("partition: invalid arguments")
{
    const Dataset d = balanced(2);
    CHECK_THROWS(dirichlet_partition(d, {7, 1.0, 0}));
    CHECK_THROWS(dirichlet_partition(d, {2, 0.0, 0}));
    CHECK_THROWS(dirichlet_partition(Dataset{}, {1, 1.0, 0}));
    CHECK(dirichlet_partition(d, {6, 1.0, 0}).size() == 6);
}

TEST_CASE("stratified split")
{
    const Dataset d = balanced(10);
    const auto s = train_test_split(d, 0.5, 9);
    CHECK(s.train.size() == 15);
    CHECK(s.test.size() == 15);
    CHECK(s.train.class_histogram() == std::vector<std::size_t>{5, 5, 5});
    CHECK(s.test.class_histogram() == std::vector<std::size_t>{5, 5, 5});

    std::set<std::size_t> all(s.train_indices.begin(), s.train_indices.end());
    all.insert(s.test_indices.begin(), s.test_indices.end());
    CHECK(all.size() == 30);

    const auto again = train_test_split(d, 0.5, 9);
    CHECK(again.train_indices == s.train_indices);
    CHECK(again.test_indices == s.test_indices);
}

TEST_CASE("dataset csv has a header and one row per sample")
{
    const Dataset d = balanced(2);
    const auto path = std::filesystem::temp_directory_path() / "bfl_data_test.csv";
    write_dataset_csv(d, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "x1,x2,label");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
    }
    CHECK(rows == 6);
    std::filesystem::remove(path);
}
