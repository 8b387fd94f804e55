#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "cve/common.hpp"
#include "cve/csv.hpp"
#include "cve/hash.hpp"
#include "support.hpp"

using namespace cve;

TEST_SUITE("common") {
    TEST_CASE("rng engine follows the standard mt19937_64 sequence") {
        // The C++ standard fixes the 10000th output of a default-seeded engine.
        Rng rng(5489);
        for (int i = 0; i < 9999; ++i) rng.next_u64();
        CHECK(rng.next_u64() == 9981545732273789042ULL);
    }

    TEST_CASE("rng draws are reproducible and in range") {
        Rng a(7), b(7);
        for (int i = 0; i < 1000; ++i) {
            const double u = a.uniform();
            CHECK(u == b.uniform());
            CHECK(u >= 0.0);
            CHECK(u < 1.0);
            const auto k = a.below(7);
            CHECK(k == b.below(7));
            CHECK(k < 7);
        }
    }

    TEST_CASE("rng moments") {
        Rng rng(8);
        const int n = 200000;
        double mean = 0.0, sq = 0.0;
        std::vector<int> buckets(5, 0);
        for (int i = 0; i < n; ++i) {
            const double z = rng.normal();
            mean += z;
            sq += z * z;
            ++buckets[rng.below(5)];
        }
        mean /= n;
        CHECK(std::abs(mean) < 0.01);
        CHECK(std::abs(sq / n - 1.0) < 0.02);
        for (int c : buckets) CHECK(std::abs(c - n / 5) < n / 100);
    }

    TEST_CASE("shuffle is a seeded permutation") {
        std::vector<int> v(50);
        std::iota(v.begin(), v.end(), 0);
        auto a = v, b = v;
        Rng r1(3), r2(3);
        r1.shuffle(a);
        r2.shuffle(b);
        CHECK(a == b);
        CHECK(a != v);
        std::sort(a.begin(), a.end());
        CHECK(a == v);
    }

    TEST_CASE("sha256 known vectors") {
        CHECK(to_hex(sha256(std::string_view(""))) ==
              "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        CHECK(to_hex(sha256(std::string_view("abc"))) ==
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        Sha256 inc;
        inc.update(std::string_view("a")).update(std::string_view("bc"));
        CHECK(to_hex(inc.finish()) == to_hex(sha256(std::string_view("abc"))));
    }

    TEST_CASE("length-prefixed fields do not collide") {
        const auto a = Sha256().field("ab").field("c").finish();
        const auto b = Sha256().field("a").field("bc").finish();
        CHECK(a != b);
    }

    TEST_CASE("fnv1a and base64 known vectors") {
        static_assert(fnv1a64("") == 0xcbf29ce484222325ULL);
        CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
        auto enc = [](std::string_view s) {
            return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
        };
        CHECK(enc("") == "");
        CHECK(enc("f") == "Zg==");
        CHECK(enc("fo") == "Zm8=");
        CHECK(enc("foo") == "Zm9v");
        CHECK(enc("foobar") == "Zm9vYmFy");
    }

    TEST_CASE("csv reader") {
        test::TempDir dir;
        test::spit(dir / "a.csv", "x,y\r\n1,2\n\n3,4\n");
        const auto t = read_csv(dir / "a.csv");
        CHECK(t.header == std::vector<std::string>{"x", "y"});
        REQUIRE(t.rows.size() == 2);
        CHECK(t.rows[1][0] == "3");
        CHECK(t.column("y") == 1);
        CHECK_THROWS_AS(t.column("z"), IoError);
        test::spit(dir / "b.csv", "x,y\n1\n");
        CHECK_THROWS_AS(read_csv(dir / "b.csv"), IoError);
        test::spit(dir / "c.csv", "");
        CHECK_THROWS_AS(read_csv(dir / "c.csv"), IoError);
        CHECK_THROWS_AS(read_csv(dir / "missing.csv"), IoError);
    }
}
