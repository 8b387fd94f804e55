#include <doctest.h>

#include <cstring>

#include "cve/features.hpp"
#include "cve/fidstats.hpp"
#include "cve/pixelmetrics.hpp"
#include "support.hpp"

using namespace cve;

namespace {

std::vector<std::uint8_t> bytes_of(const std::filesystem::path& p) {
    const auto s = test::slurp(p);
    return {s.begin(), s.end()};
}

FeatureFile layered_example() {
    FeatureFile f;
    f.layers.push_back({"block1", {2, 1, 2}, {0.5f, 0.25f, -1.0f, 2.0f}, std::vector<float>{1.0f, 0.5f}});
    f.layers.push_back({"block2", {1, 1, 1}, {7.0f}, std::vector<float>{0.75f}});
    return f;
}

void put_u32_at(std::vector<std::uint8_t>& b, std::size_t offset, std::uint32_t v) { std::memcpy(&b[offset], &v, 4); }

}  // namespace

TEST_SUITE("features") {
    TEST_CASE("golden files written by an independent encoder decode as expected") {
        const auto dir = test::fixture_dir() / "cvf";
        const auto pooled = read_cvf(dir / "pooled.cvf");
        REQUIRE(pooled.layers.size() == 1);
        CHECK(pooled.layers[0].name == "pool");
        CHECK(pooled.layers[0].dims == std::vector<std::uint32_t>{4});
        CHECK(pooled.layers[0].data == std::vector<float>{1.0f, -2.0f, 0.5f, 3.25f});
        CHECK_FALSE(pooled.layers[0].weights.has_value());

        const auto rows = fid::feature_set_from_cvf(read_cvf(dir / "rows.cvf"));
        CHECK(rows.n == 3);
        CHECK(rows.d == 2);
        CHECK(rows.row(2)[1] == 6.0);

        CHECK(read_cvf(dir / "layered.cvf") == layered_example());
    }

    TEST_CASE("encoder reproduces the golden bytes") {
        const auto dir = test::fixture_dir() / "cvf";
        CHECK(encode_cvf(layered_example()) == bytes_of(dir / "layered.cvf"));
        CHECK(encode_cvf(read_cvf(dir / "pooled.cvf")) == bytes_of(dir / "pooled.cvf"));
        CHECK(encode_cvf(read_cvf(dir / "rows.cvf")) == bytes_of(dir / "rows.cvf"));
    }

    TEST_CASE("golden layered features give zero self-distance") {
        const auto f = pixel::layered_from_cvf(read_cvf(test::fixture_dir() / "cvf" / "layered.cvf"));
        CHECK(pixel::lpips(f, f) <= 1e-9);
        const auto rows = fid::feature_set_from_cvf(read_cvf(test::fixture_dir() / "cvf" / "rows.cvf"));
        CHECK(fid::fid(rows, rows) <= 1e-6);
    }

    TEST_CASE("file round trip") {
        test::TempDir dir;
        write_cvf(dir / "x.cvf", layered_example());
        CHECK(read_cvf(dir / "x.cvf") == layered_example());
        CHECK(bytes_of(dir / "x.cvf") == encode_cvf(layered_example()));
    }

    TEST_CASE("decoder rejects malformed input") {
        const auto good = bytes_of(test::fixture_dir() / "cvf" / "pooled.cvf");
        SUBCASE("bad magic") {
            auto b = good;
            b[3] = '2';
            CHECK_THROWS_AS(decode_cvf(b), IoError);
        }
        SUBCASE("unknown flag") {
            auto b = good;
            put_u32_at(b, 4, 2);
            CHECK_THROWS_AS(decode_cvf(b), IoError);
        }
        SUBCASE("truncated") {
            auto b = good;
            b.pop_back();
            CHECK_THROWS_AS(decode_cvf(b), IoError);
        }
        SUBCASE("trailing bytes") {
            auto b = good;
            b.push_back(0);
            CHECK_THROWS_AS(decode_cvf(b), IoError);
        }
        SUBCASE("declared size larger than payload") {
            auto b = good;
            put_u32_at(b, 24, 1000000);
            CHECK_THROWS_AS(decode_cvf(b), IoError);
        }
        SUBCASE("zero dimension") {
            auto b = good;
            put_u32_at(b, 24, 0);
            CHECK_THROWS_AS(decode_cvf(b), IoError);
        }
        SUBCASE("rank out of range") {
            auto b = good;
            put_u32_at(b, 20, 4);
            CHECK_THROWS_AS(decode_cvf(b), IoError);
        }
        SUBCASE("flag set but weights missing") {
            auto b = good;
            put_u32_at(b, 4, 1);
            CHECK_THROWS_AS(decode_cvf(b), IoError);
        }
    }

    TEST_CASE("encoder validates its input") {
        FeatureFile dup;
        dup.layers.push_back({"a", {1}, {1.0f}, std::nullopt});
        dup.layers.push_back({"a", {1}, {2.0f}, std::nullopt});
        CHECK_THROWS_AS(encode_cvf(dup), IoError);
        FeatureFile mixed = layered_example();
        mixed.layers[1].weights.reset();
        CHECK_THROWS_AS(encode_cvf(mixed), IoError);
        FeatureFile wrong_count = layered_example();
        wrong_count.layers[0].weights = std::vector<float>{1.0f};
        CHECK_THROWS_AS(encode_cvf(wrong_count), IoError);
        FeatureFile short_data;
        short_data.layers.push_back({"a", {3}, {1.0f}, std::nullopt});
        CHECK_THROWS_AS(encode_cvf(short_data), IoError);
    }

    TEST_CASE("feature directory layout") {
        CHECK(feature_path("/d", kFidKind, kStreetRole, "p001") == std::filesystem::path("/d/fid/street/p001.cvf"));
        CHECK(feature_path("/d", kLpipsKind, "pix2pix", "p002") ==
              std::filesystem::path("/d/lpips/pix2pix/p002.cvf"));
    }
}
