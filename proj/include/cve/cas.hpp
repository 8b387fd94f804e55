#pragma once

// Classification Accuracy Score: a severity classifier trained on real-image
// features is frozen and then asked to label generated images.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cve/dataset.hpp"
#include "cve/fidstats.hpp"

namespace cve::cas {

using dataset::kNumClasses;
using dataset::SeverityLabel;

struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<double> m, v;

    explicit AdamState(std::size_t n = 0, double lr_ = 1e-4) : lr(lr_), m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update, in place. Throws ShapeError when sizes differ
/// and DomainError on a non-finite gradient (nothing is modified then).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

class LinearSoftmaxHead {
public:
    LinearSoftmaxHead() = default;
    explicit LinearSoftmaxHead(std::size_t dim);

    std::size_t dim() const { return dim_; }
    /// Flattened parameters: weights (3 x dim, row-major) followed by bias (3).
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    std::array<double, kNumClasses> logits(std::span<const double> x) const;
    std::array<double, kNumClasses> predict_proba(std::span<const double> x) const;
    /// Arg-max class; ties go to the lower index.
    SeverityLabel predict(std::span<const double> x) const;

    bool operator==(const LinearSoftmaxHead&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> params_;
};

/// Mean cross-entropy of the head over the set.
double cross_entropy(const LinearSoftmaxHead& head, const fid::FeatureSet& features,
                     std::span<const SeverityLabel> labels);

struct TrainOptions {
    std::size_t epochs = 10;
    std::size_t batch = 32;
    double lr = 1e-4;
    std::uint64_t seed = 0;
};

struct TrainResult {
    LinearSoftmaxHead head;
    /// Training-set cross-entropy before training and after each epoch.
    std::vector<double> epoch_loss;
};

class MissingClassError : public Error {
public:
    using Error::Error;
};

/// Zero-initialised head, Adam over seeded shuffled mini-batches of the mean
/// cross-entropy. Bitwise deterministic for fixed inputs and seed.
TrainResult train_head(const fid::FeatureSet& features, std::span<const SeverityLabel> labels,
                       const TrainOptions& options = {});

struct ConfusionMatrix {
    /// counts[true][predicted]
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

    void add(SeverityLabel truth, SeverityLabel predicted);
    std::uint64_t total() const;
    std::uint64_t row_total(std::size_t truth) const;
    std::uint64_t column_total(std::size_t predicted) const;
    bool operator==(const ConfusionMatrix&) const = default;
};

struct CasReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::array<double, kNumClasses> per_class_recall{};
    std::array<double, kNumClasses> per_class_f1{};
    ConfusionMatrix matrix;
    bool operator==(const CasReport&) const = default;
};

/// Accuracy, per-class recall and F1 (0 when undefined), macro-F1.
CasReport report_from_confusion(const ConfusionMatrix& matrix);

CasReport score_predictions(std::span<const SeverityLabel> truth, std::span<const SeverityLabel> predicted);

CasReport evaluate_cas(const LinearSoftmaxHead& head, const fid::FeatureSet& gen_features,
                       std::span<const SeverityLabel> labels);

// head.cvh: "CVH1", u32 classes, u32 dim, then (classes*dim + classes)
// little-endian float64 parameters (weights row-major, then bias).
void write_head(const std::filesystem::path& path, const LinearSoftmaxHead& head);
LinearSoftmaxHead read_head(const std::filesystem::path& path);

/// Labels CSV: header "pair_id,label", then one row per sample.
struct LabelRow {
    std::string pair_id;
    SeverityLabel label;
};
std::vector<LabelRow> read_labels_csv(const std::filesystem::path& path);
void write_labels_csv(const std::filesystem::path& path, std::span<const LabelRow> rows);

/// Predicted-label CSV: header "pair_id,method,predicted_label".
struct PredictionRow {
    std::string pair_id;
    std::string method;
    SeverityLabel predicted;
};
std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path);
void write_predictions_csv(const std::filesystem::path& path, std::span<const PredictionRow> rows);

struct MethodReport {
    std::string method;
    CasReport report;
};

/// Joins predictions with ground truth by pair id; one report per method in
/// first-appearance order. Every labelled pair must be predicted exactly once
/// per method.
std::vector<MethodReport> score_prediction_file(std::span<const PredictionRow> predictions,
                                                std::span<const LabelRow> labels);

}  // namespace cve::cas
