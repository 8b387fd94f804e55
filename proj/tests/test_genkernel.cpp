#include <doctest.h>

#include <cmath>
#include <memory>

#include "cve/genkernel.hpp"
#include "support.hpp"

using namespace cve;
using namespace cve::genkernel;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.normal();
    return t;
}

Conditioning simple_cond() {
    Conditioning c;
    c.control = {{0.1, 0.2}, {0.3}};
    return c;
}

}  // namespace

TEST_SUITE("genkernel") {
    TEST_CASE("pix2pix loss hand values") {
        const ImagePlane real(4, 4, 1, 0.3), fake_same(4, 4, 1, 0.3), fake_off(4, 4, 1, 0.4);
        const auto same = pix2pix_loss(real, fake_same, 0.5);
        CHECK(same.l1_term == 0.0);
        CHECK(same.gan_term == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(same.total == doctest::Approx(0.693147).epsilon(1e-6));
        const auto off = pix2pix_loss(real, fake_off, 0.5);
        CHECK(off.l1_term == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(off.total == doctest::Approx(10.0 + std::log(2.0)).epsilon(1e-10));
        const auto pure = pix2pix_loss(real, fake_off, 0.5, 0.0);
        CHECK(pure.total == pure.gan_term);
    }

    TEST_CASE("pix2pix loss validation and sign") {
        const ImagePlane a(2, 2, 1, 0.0), b(2, 3, 1, 0.0);
        CHECK_THROWS_AS(pix2pix_loss(a, b, 0.5), ShapeError);
        CHECK_THROWS_AS(pix2pix_loss(a, a, 0.0), DomainError);
        CHECK_THROWS_AS(pix2pix_loss(a, a, 1.0), DomainError);
        CHECK_THROWS_AS(pix2pix_loss(a, a, 0.5, -1.0), DomainError);
        Rng rng(31);
        for (int i = 0; i < 50; ++i) {
            const auto x = test::random_image(rng, 3, 3);
            const auto y = test::random_image(rng, 3, 3);
            CHECK(pix2pix_loss(x, y, 0.01 + 0.98 * rng.uniform(), 100.0 * rng.uniform()).total >= 0.0);
        }
    }

    TEST_CASE("linear schedule is cumulative and strictly decreasing") {
        const auto s = NoiseSchedule::linear(50);
        CHECK(s.steps() == 50);
        CHECK(s.alpha_bar(0) == 1.0);
        CHECK(s.alpha_bar(1) == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));
        CHECK(s.alpha_bar(2) == doctest::Approx((1.0 - 1e-4) * (1.0 - (1e-4 + (0.02 - 1e-4) / 49))).epsilon(1e-15));
        for (std::size_t t = 1; t <= 50; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
        CHECK(s.alpha_bar(50) > 0.0);
        CHECK(NoiseSchedule::linear(1).alpha_bar(1) == doctest::Approx(1.0 - 1e-4));
        CHECK_THROWS_AS(s.alpha_bar(51), DomainError);
        CHECK_THROWS_AS(NoiseSchedule::linear(0), DomainError);
        CHECK_THROWS_AS(NoiseSchedule({0.5, 0.6}), DomainError);
        CHECK_THROWS_AS(NoiseSchedule({0.5, 0.0}), DomainError);
    }

    TEST_CASE("forward diffusion closed forms") {
        const auto one = Tensor::scalar(1.0);
        CHECK(forward_diffuse_with(one, 0.25, one).data[0] == doctest::Approx(0.5 + std::sqrt(0.75)).epsilon(1e-15));
        Rng rng(32);
        const auto z0 = random_tensor(rng, {2, 3});
        const auto eps = random_tensor(rng, {2, 3});
        CHECK(forward_diffuse_with(z0, 1.0, eps) == z0);
        CHECK(forward_diffuse_with(z0, 0.0, eps) == eps);
        const auto s = NoiseSchedule::linear(10);
        const auto zt = forward_diffuse(z0, 4, eps, s);
        CHECK(zt.t == 4);
        CHECK(max_abs_diff(zt.z, forward_diffuse_with(z0, s.alpha_bar(4), eps)) == 0.0);
        CHECK_THROWS_AS(forward_diffuse(z0, 0, eps, s), DomainError);
        CHECK_THROWS_AS(forward_diffuse(z0, 11, eps, s), DomainError);
        CHECK_THROWS_AS(forward_diffuse(z0, 1, random_tensor(rng, {3, 2}), s), ShapeError);
    }

    TEST_CASE("diffusion coefficients preserve unit variance") {
        const auto s = NoiseSchedule::linear(50);
        for (std::size_t t = 1; t <= 50; ++t) {
            const double a = std::sqrt(s.alpha_bar(t)), b = std::sqrt(1.0 - s.alpha_bar(t));
            CHECK(std::abs(a * a + b * b - 1.0) <= 1e-15);
        }
        Rng rng(33);
        const std::size_t n = 100000;
        Tensor z0({n}), eps({n});
        for (auto& v : z0.data) v = rng.normal();
        for (auto& v : eps.data) v = rng.normal();
        const auto zt = forward_diffuse_with(z0, 0.37, eps);
        double mean = 0.0, sq = 0.0;
        for (double v : zt.data) mean += v;
        mean /= n;
        for (double v : zt.data) sq += (v - mean) * (v - mean);
        const double var = sq / (n - 1);
        CHECK(var >= 0.98);
        CHECK(var <= 1.02);
    }

    TEST_CASE("oracle predictor round trip recovers z0") {
        Rng rng(34);
        for (std::size_t steps : {1u, 2u, 10u, 25u, 50u}) {
            const auto s = NoiseSchedule::linear(steps);
            const auto z0 = random_tensor(rng, {3, 4, 4});
            const auto eps = random_tensor(rng, {3, 4, 4});
            const auto noisy = forward_diffuse(z0, steps, eps, s);
            const auto back = reverse_loop(noisy, FixedNoisePredictor(eps), simple_cond(), s);
            CHECK(back.t == 0);
            CHECK(max_abs_diff(back.z, z0) <= 1e-6);
        }
    }

    TEST_CASE("single denoise steps") {
        const auto s = NoiseSchedule::linear(10);
        Rng rng(35);
        const auto z = random_tensor(rng, {5});
        const auto next = denoise_step({z, 10}, ZeroNoisePredictor(), simple_cond(), s);
        const double ratio = std::sqrt(s.alpha_bar(9) / s.alpha_bar(10));
        for (std::size_t i = 0; i < 5; ++i) CHECK(next.z.data[i] == doctest::Approx(ratio * z.data[i]).epsilon(1e-14));

        const auto z0 = random_tensor(rng, {5});
        const auto eps = random_tensor(rng, {5});
        const auto z1 = forward_diffuse(z0, 1, eps, s);
        const auto first = denoise_step(z1, FixedNoisePredictor(eps), simple_cond(), s);
        CHECK(max_abs_diff(first.z, z0) <= 1e-14);
        CHECK_THROWS_AS(denoise_step({z, 0}, ZeroNoisePredictor(), simple_cond(), s), DomainError);
        CHECK_THROWS_AS(denoise_step({z, 1}, FixedNoisePredictor(random_tensor(rng, {4})), simple_cond(), s),
                        ShapeError);
    }

    TEST_CASE("conditioned predictor depends on control and prompt") {
        const LinearConditionedPredictor p(0.5, 1.0, 2.0);
        const Tensor z({2}, std::vector<double>{1.0, -1.0});
        Conditioning c;
        c.control = {{0.2, 0.4}};
        const auto base = p.predict(z, 1, c);
        CHECK(base.data[0] == doctest::Approx(0.5 + std::tanh(0.3)).epsilon(1e-14));
        c.prompt_embedding = std::vector<double>{0.1, 0.3};
        const auto with_prompt = p.predict(z, 1, c);
        CHECK(with_prompt.data[1] == doctest::Approx(-0.5 + std::tanh(0.3 + 0.4)).epsilon(1e-14));
        CHECK_NOTHROW(c.validate(2));
        CHECK_THROWS_AS(c.validate(3), DomainError);
        CHECK_THROWS_AS(Conditioning{}.validate(), DomainError);
    }

    TEST_CASE("softmax and routing") {
        const std::vector<double> big{10, 0, 0};
        const auto w = softmax(big);
        const double e = std::exp(-10.0);
        CHECK(w[0] == doctest::Approx(1.0 / (1.0 + 2 * e)).epsilon(1e-14));
        CHECK(w[1] == doctest::Approx(e / (1.0 + 2 * e)).epsilon(1e-12));
        const std::vector<double> shifted{1010, 1000, 1000};
        const auto ws = softmax(shifted);
        for (int k = 0; k < 3; ++k) CHECK(std::abs(ws[k] - w[k]) <= 1e-12);
        const std::vector<double> feats{0.3, -1.0};
        const auto uniform = route_weights(feats, RouterParams::zeros(4, 2));
        for (double v : uniform.w) CHECK(v == doctest::Approx(0.25));
        CHECK_THROWS_AS(route_weights(feats, RouterParams::zeros(3, 3)), ShapeError);
        CHECK_THROWS_AS(softmax(std::vector<double>{}), DomainError);
    }

    TEST_CASE("router weights are convex for random routers") {
        Rng rng(36);
        for (int i = 0; i < 1000; ++i) {
            auto p = RouterParams::zeros(3, 5);
            for (auto& v : p.weights) v = 5.0 * rng.normal();
            for (auto& v : p.bias) v = 5.0 * rng.normal();
            std::vector<double> f(5);
            for (auto& v : f) v = rng.normal();
            const auto w = route_weights(f, p);
            double sum = 0.0;
            for (double v : w.w) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) <= 1e-9);
        }
    }

    TEST_CASE("moe aggregation hand cases") {
        const std::vector<Tensor> two{Tensor::scalar(0.0), Tensor::scalar(1.0)};
        CHECK(moe_aggregate(two, {{0.5, 0.5}}).data[0] == 0.5);
        const std::vector<Tensor> three{Tensor::scalar(1.0), Tensor::scalar(2.0), Tensor::scalar(3.0)};
        CHECK(std::abs(moe_aggregate(three, {{0.2, 0.3, 0.5}}).data[0] - 2.3) <= 1e-12);
        CHECK_THROWS_AS(moe_aggregate(three, {{0.5, 0.5}}), ShapeError);
        const std::vector<Tensor> mixed{Tensor::scalar(1.0), Tensor({2}, 0.0)};
        CHECK_THROWS_AS(moe_aggregate(mixed, {{0.5, 0.5}}), ShapeError);
    }

    TEST_CASE("moe one-hot, linearity and permutation equivariance") {
        Rng rng(37);
        std::vector<Tensor> experts;
        for (int k = 0; k < 3; ++k) experts.push_back(random_tensor(rng, {4}));
        for (std::size_t k = 0; k < 3; ++k) {
            RoutingWeights w{{0.0, 0.0, 0.0}};
            w.w[k] = 1.0;
            CHECK(moe_aggregate(experts, w) == experts[k]);
        }
        const RoutingWeights w{{0.1, 0.6, 0.3}};
        const auto base = moe_aggregate(experts, w);
        std::vector<Tensor> permuted{experts[2], experts[0], experts[1]};
        CHECK(max_abs_diff(moe_aggregate(permuted, {{0.3, 0.1, 0.6}}), base) <= 1e-15);
        auto doubled = experts;
        for (auto& e : doubled)
            for (auto& v : e.data) v *= 2.0;
        const auto twice = moe_aggregate(doubled, w);
        for (std::size_t i = 0; i < 4; ++i) CHECK(twice.data[i] == doctest::Approx(2.0 * base.data[i]).epsilon(1e-14));
    }

    TEST_CASE("mixture predictor routes expert-specific conditioning") {
        Rng rng(38);
        const auto e0 = random_tensor(rng, {3});
        const auto e1 = random_tensor(rng, {3});
        std::vector<std::shared_ptr<const NoisePredictor>> experts{std::make_shared<FixedNoisePredictor>(e0),
                                                                   std::make_shared<FixedNoisePredictor>(e1)};
        auto router = RouterParams::zeros(2, 1);
        router.bias = {30.0, 0.0};
        const MixturePredictor mix(experts, {simple_cond(), simple_cond()}, {1.0}, router);
        CHECK(max_abs_diff(mix.predict(e0, 1, {}), e0) <= 1e-12);

        const MixturePredictor even(experts, {simple_cond(), simple_cond()}, {1.0}, RouterParams::zeros(2, 1));
        const auto out = even.predict(e0, 1, {});
        for (std::size_t i = 0; i < 3; ++i) CHECK(out.data[i] == doctest::Approx(0.5 * (e0.data[i] + e1.data[i])));
        CHECK_THROWS_AS(MixturePredictor(experts, {simple_cond()}, {1.0}, router), ShapeError);
    }
}
