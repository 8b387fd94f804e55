#include "cve/genkernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cve::genkernel {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_finite(const Tensor& t, const char* what) {
    for (double v : t.data)
        if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite entry");
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)), data(product(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (product(shape) != data.size()) throw ShapeError("Tensor: shape does not match data length");
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
    if (alpha_bar_.empty()) throw DomainError("NoiseSchedule: at least one step required");
    double prev = 1.0;
    for (std::size_t i = 0; i < alpha_bar_.size(); ++i) {
        const double a = alpha_bar_[i];
        if (!(a > 0.0 && a <= 1.0)) throw DomainError("NoiseSchedule: alpha_bar must lie in (0, 1]");
        if (i > 0 && !(a < prev)) throw DomainError("NoiseSchedule: alpha_bar must be strictly decreasing");
        prev = a;
    }
}

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
    if (steps == 0) throw DomainError("NoiseSchedule::linear: steps must be >= 1");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
        throw DomainError("NoiseSchedule::linear: need 0 < beta_start <= beta_end < 1");
    std::vector<double> alpha_bar(steps);
    double acc = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        const double beta = beta_start + (beta_end - beta_start) * frac;
        acc *= 1.0 - beta;
        alpha_bar[i] = acc;
    }
    return NoiseSchedule(std::move(alpha_bar));
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
    if (t > alpha_bar_.size())
        throw DomainError("NoiseSchedule: step " + std::to_string(t) + " outside [0, " +
                          std::to_string(alpha_bar_.size()) + "]");
    return t == 0 ? 1.0 : alpha_bar_[t - 1];
}

void Conditioning::validate(std::optional<std::size_t> prompt_dim) const {
    if (control.empty() || std::all_of(control.begin(), control.end(), [](const auto& c) { return c.empty(); }))
        throw DomainError("Conditioning: control features must be non-empty");
    if (prompt_dim && prompt_embedding && prompt_embedding->size() != *prompt_dim)
        throw DomainError("Conditioning: prompt embedding has dimension " + std::to_string(prompt_embedding->size()) +
                          ", expected " + std::to_string(*prompt_dim));
}

Tensor FixedNoisePredictor::predict(const Tensor& z_t, std::size_t, const Conditioning&) const {
    if (!eps_.same_shape(z_t)) throw ShapeError("FixedNoisePredictor: stored noise does not match latent shape");
    return eps_;
}

Tensor ZeroNoisePredictor::predict(const Tensor& z_t, std::size_t, const Conditioning&) const {
    return Tensor(z_t.shape, 0.0);
}

Tensor LinearConditionedPredictor::predict(const Tensor& z_t, std::size_t, const Conditioning& cond) const {
    double control_sum = 0.0;
    std::size_t control_n = 0;
    for (const auto& block : cond.control) {
        for (double v : block) control_sum += v;
        control_n += block.size();
    }
    const double control_mean = control_n ? control_sum / static_cast<double>(control_n) : 0.0;
    double prompt_mean = 0.0;
    if (cond.prompt_embedding && !cond.prompt_embedding->empty()) {
        prompt_mean = std::accumulate(cond.prompt_embedding->begin(), cond.prompt_embedding->end(), 0.0) /
                      static_cast<double>(cond.prompt_embedding->size());
    }
    const double offset = std::tanh(control_gain_ * control_mean + prompt_gain_ * prompt_mean);
    Tensor out(z_t.shape);
    for (std::size_t i = 0; i < z_t.size(); ++i) out.data[i] = latent_gain_ * z_t.data[i] + offset;
    return out;
}

Pix2PixLoss pix2pix_loss(const ImagePlane& real, const ImagePlane& fake, double d_fake_score, double lambda) {
    if (!real.same_shape(fake)) throw ShapeError("pix2pix_loss: real and fake differ in shape");
    if (!(d_fake_score > 0.0 && d_fake_score < 1.0))
        throw DomainError("pix2pix_loss: discriminator score must lie in (0, 1)");
    if (!(lambda >= 0.0)) throw DomainError("pix2pix_loss: lambda must be >= 0");
    const auto a = real.data();
    const auto b = fake.data();
    double l1 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) l1 += std::abs(a[i] - b[i]);
    l1 = a.empty() ? 0.0 : l1 / static_cast<double>(a.size());
    const double gan = -std::log(d_fake_score);
    return {gan + lambda * l1, gan, l1};
}

Tensor forward_diffuse_with(const Tensor& z0, double alpha_bar, const Tensor& eps) {
    if (!z0.same_shape(eps)) throw ShapeError("forward_diffuse: noise shape does not match latent shape");
    if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw DomainError("forward_diffuse: alpha_bar outside [0, 1]");
    const double signal = std::sqrt(alpha_bar);
    const double noise = std::sqrt(1.0 - alpha_bar);
    Tensor out(z0.shape);
    for (std::size_t i = 0; i < z0.size(); ++i) out.data[i] = signal * z0.data[i] + noise * eps.data[i];
    return out;
}

LatentState forward_diffuse(const Tensor& z0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.steps())
        throw DomainError("forward_diffuse: step " + std::to_string(t) + " outside [1, " +
                          std::to_string(sched.steps()) + "]");
    require_finite(z0, "forward_diffuse");
    return {forward_diffuse_with(z0, sched.alpha_bar(t), eps), t};
}

LatentState denoise_step(const LatentState& z_t, const NoisePredictor& predictor, const Conditioning& cond,
                         const NoiseSchedule& sched) {
    const std::size_t t = z_t.t;
    if (t < 1 || t > sched.steps())
        throw DomainError("denoise_step: step " + std::to_string(t) + " outside [1, " +
                          std::to_string(sched.steps()) + "]");
    const Tensor eps = predictor.predict(z_t.z, t, cond);
    if (!eps.same_shape(z_t.z)) throw ShapeError("denoise_step: predictor output shape does not match latent");

    const double a_t = sched.alpha_bar(t);
    const double a_prev = sched.alpha_bar(t - 1);
    const double sqrt_a_t = std::sqrt(a_t), sqrt_1m_a_t = std::sqrt(1.0 - a_t);
    const double sqrt_a_prev = std::sqrt(a_prev), sqrt_1m_a_prev = std::sqrt(1.0 - a_prev);
    LatentState next{Tensor(z_t.z.shape), t - 1};
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double z0_hat = (z_t.z.data[i] - sqrt_1m_a_t * eps.data[i]) / sqrt_a_t;
        next.z.data[i] = sqrt_a_prev * z0_hat + sqrt_1m_a_prev * eps.data[i];
    }
    require_finite(next.z, "denoise_step");
    return next;
}

LatentState reverse_loop(LatentState z_t, const NoisePredictor& predictor, const Conditioning& cond,
                         const NoiseSchedule& sched) {
    while (z_t.t > 0) z_t = denoise_step(z_t, predictor, cond, sched);
    return z_t;
}

RouterParams RouterParams::zeros(std::size_t experts, std::size_t dim) {
    return RouterParams{experts, dim, std::vector<double>(experts * dim, 0.0), std::vector<double>(experts, 0.0)};
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw DomainError("softmax: empty input");
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - peak);
        total += out[k];
    }
    for (double& v : out) v /= total;
    return out;
}

RoutingWeights route_weights(std::span<const double> features, const RouterParams& params) {
    if (params.experts < 1) throw DomainError("route_weights: need at least one expert");
    if (features.size() != params.dim || params.weights.size() != params.experts * params.dim ||
        params.bias.size() != params.experts)
        throw ShapeError("route_weights: router parameters do not match feature dimension " +
                         std::to_string(features.size()));
    std::vector<double> logits(params.experts);
    for (std::size_t k = 0; k < params.experts; ++k) {
        double acc = params.bias[k];
        for (std::size_t j = 0; j < params.dim; ++j) acc += params.weights[k * params.dim + j] * features[j];
        logits[k] = acc;
    }
    return {softmax(logits)};
}

Tensor moe_aggregate(std::span<const Tensor> expert_outputs, const RoutingWeights& w) {
    if (expert_outputs.empty()) throw DomainError("moe_aggregate: no experts");
    if (expert_outputs.size() != w.w.size())
        throw ShapeError("moe_aggregate: " + std::to_string(expert_outputs.size()) + " experts but " +
                         std::to_string(w.w.size()) + " weights");
    for (const auto& e : expert_outputs)
        if (!e.same_shape(expert_outputs.front())) throw ShapeError("moe_aggregate: expert outputs differ in shape");
    Tensor out(expert_outputs.front().shape, 0.0);
    for (std::size_t k = 0; k < expert_outputs.size(); ++k)
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += w.w[k] * expert_outputs[k].data[i];
    return out;
}

MixturePredictor::MixturePredictor(std::vector<std::shared_ptr<const NoisePredictor>> experts,
                                   std::vector<Conditioning> expert_conditioning,
                                   std::vector<double> router_features, RouterParams router)
    : experts_(std::move(experts)), conditioning_(std::move(expert_conditioning)) {
    if (experts_.size() != router.experts || conditioning_.size() != experts_.size())
        throw ShapeError("MixturePredictor: experts, conditioning and router disagree on K");
    weights_ = route_weights(router_features, router);
}

Tensor MixturePredictor::predict(const Tensor& z_t, std::size_t t, const Conditioning&) const {
    std::vector<Tensor> outputs;
    outputs.reserve(experts_.size());
    for (std::size_t k = 0; k < experts_.size(); ++k) outputs.push_back(experts_[k]->predict(z_t, t, conditioning_[k]));
    return moe_aggregate(outputs, weights_);
}

}  // namespace cve::genkernel
