#pragma once

// Executable forms of the generative objectives: the Pix2Pix generator loss,
// forward diffusion with a cumulative schedule, deterministic DDIM-style
// reverse steps around a pluggable noise predictor, and mixture-of-experts
// routing/aggregation.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "cve/common.hpp"
#include "cve/image.hpp"

namespace cve::genkernel {

/// Dense real tensor, row-major.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);
    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool operator==(const Tensor&) const = default;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

/// Cumulative signal coefficients alpha_bar[t-1] for t = 1..T; alpha_bar at
/// t = 0 is implicitly 1.
class NoiseSchedule {
public:
    explicit NoiseSchedule(std::vector<double> alpha_bar);

    /// alpha_bar_t = prod_{s<=t} (1 - beta_s) with beta linearly spaced on
    /// [beta_start, beta_end] over T steps (beta_start alone when T = 1).
    static NoiseSchedule linear(std::size_t steps = 50, double beta_start = 1e-4, double beta_end = 0.02);

    std::size_t steps() const { return alpha_bar_.size(); }
    /// Valid for 0 <= t <= T.
    double alpha_bar(std::size_t t) const;
    std::span<const double> values() const { return alpha_bar_; }

private:
    std::vector<double> alpha_bar_;
};

struct LatentState {
    Tensor z;
    std::size_t t = 0;
};

struct Conditioning {
    /// Spatial control features, one flattened block per scale.
    std::vector<std::vector<double>> control;
    std::optional<std::vector<double>> prompt_embedding;

    /// Throws DomainError if control is empty or the prompt has the wrong size.
    void validate(std::optional<std::size_t> prompt_dim = std::nullopt) const;
};

/// Noise prediction eps_theta(z_t, t | cond). Implementations must be
/// deterministic and safe to call concurrently.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual Tensor predict(const Tensor& z_t, std::size_t t, const Conditioning& cond) const = 0;
};

/// Returns a fixed tensor, typically the true noise used in forward_diffuse.
class FixedNoisePredictor final : public NoisePredictor {
public:
    explicit FixedNoisePredictor(Tensor eps) : eps_(std::move(eps)) {}
    Tensor predict(const Tensor& z_t, std::size_t t, const Conditioning& cond) const override;

private:
    Tensor eps_;
};

class ZeroNoisePredictor final : public NoisePredictor {
public:
    Tensor predict(const Tensor& z_t, std::size_t t, const Conditioning& cond) const override;
};

/// eps = latent_gain * z_t + tanh(control_gain * mean(all control) + prompt_gain * mean(prompt)),
/// additive per element. A minimal predictor whose output depends on every
/// conditioning input, used to exercise the plumbing.
class LinearConditionedPredictor final : public NoisePredictor {
public:
    LinearConditionedPredictor(double latent_gain, double control_gain, double prompt_gain)
        : latent_gain_(latent_gain), control_gain_(control_gain), prompt_gain_(prompt_gain) {}
    Tensor predict(const Tensor& z_t, std::size_t t, const Conditioning& cond) const override;

private:
    double latent_gain_, control_gain_, prompt_gain_;
};

struct Pix2PixLoss {
    double total;
    double gan_term;
    double l1_term;
};

/// Generator objective: -ln D(fake) + lambda * mean|real - fake|.
Pix2PixLoss pix2pix_loss(const ImagePlane& real, const ImagePlane& fake, double d_fake_score, double lambda = 100.0);

/// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps.
LatentState forward_diffuse(const Tensor& z0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched);

/// Same, with the coefficient supplied directly (alpha_bar in [0, 1]).
Tensor forward_diffuse_with(const Tensor& z0, double alpha_bar, const Tensor& eps);

/// One deterministic reverse step from t to t-1.
LatentState denoise_step(const LatentState& z_t, const NoisePredictor& predictor, const Conditioning& cond,
                         const NoiseSchedule& sched);

/// Runs denoise_step from z_t.t down to 0.
LatentState reverse_loop(LatentState z_t, const NoisePredictor& predictor, const Conditioning& cond,
                         const NoiseSchedule& sched);

struct RouterParams {
    std::size_t experts = 3;
    std::size_t dim = 0;
    std::vector<double> weights;  // experts x dim, row-major
    std::vector<double> bias;     // experts

    static RouterParams zeros(std::size_t experts, std::size_t dim);
};

/// Convex gating weights; every entry >= 0 and the sum is 1.
struct RoutingWeights {
    std::vector<double> w;
};

/// Numerically stable softmax (max-shifted).
std::vector<double> softmax(std::span<const double> logits);

RoutingWeights route_weights(std::span<const double> features, const RouterParams& params);

/// sum_k w_k * expert_outputs[k].
Tensor moe_aggregate(std::span<const Tensor> expert_outputs, const RoutingWeights& w);

/// Routes router features through RouterParams, queries each expert with its
/// own conditioning and aggregates. The conditioning passed to predict() is
/// ignored; experts use the per-expert values given at construction.
class MixturePredictor final : public NoisePredictor {
public:
    MixturePredictor(std::vector<std::shared_ptr<const NoisePredictor>> experts,
                     std::vector<Conditioning> expert_conditioning, std::vector<double> router_features,
                     RouterParams router);
    Tensor predict(const Tensor& z_t, std::size_t t, const Conditioning& cond) const override;
    const RoutingWeights& weights() const { return weights_; }

private:
    std::vector<std::shared_ptr<const NoisePredictor>> experts_;
    std::vector<Conditioning> conditioning_;
    RoutingWeights weights_;
};

}  // namespace cve::genkernel
