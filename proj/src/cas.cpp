#include "cve/cas.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <set>

#include "cve/csv.hpp"
#include "cve/genkernel.hpp"

namespace cve::cas {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
    for (double g : grads)
        if (!std::isfinite(g)) throw DomainError("adam_step: non-finite gradient");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / correction1;
        const double v_hat = state.v[i] / correction2;
        params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

LinearSoftmaxHead::LinearSoftmaxHead(std::size_t dim) : dim_(dim), params_((dim + 1) * kNumClasses, 0.0) {}

std::array<double, kNumClasses> LinearSoftmaxHead::logits(std::span<const double> x) const {
    if (x.size() != dim_)
        throw ShapeError("LinearSoftmaxHead: feature dimension " + std::to_string(x.size()) + ", head expects " +
                         std::to_string(dim_));
    std::array<double, kNumClasses> out{};
    const double* bias = params_.data() + kNumClasses * dim_;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        double acc = bias[k];
        const double* w = params_.data() + k * dim_;
        for (std::size_t j = 0; j < dim_; ++j) acc += w[j] * x[j];
        out[k] = acc;
    }
    return out;
}

std::array<double, kNumClasses> LinearSoftmaxHead::predict_proba(std::span<const double> x) const {
    const auto z = logits(x);
    const auto p = genkernel::softmax(z);
    return {p[0], p[1], p[2]};
}

SeverityLabel LinearSoftmaxHead::predict(std::span<const double> x) const {
    const auto z = logits(x);
    return dataset::label_from_index(static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin()));
}

double cross_entropy(const LinearSoftmaxHead& head, const fid::FeatureSet& features,
                     std::span<const SeverityLabel> labels) {
    if (labels.size() != features.n) throw ShapeError("cross_entropy: label count differs from feature rows");
    double total = 0.0;
    for (std::size_t i = 0; i < features.n; ++i) {
        const auto z = head.logits(features.row(i));
        const double peak = *std::max_element(z.begin(), z.end());
        double lse = 0.0;
        for (double v : z) lse += std::exp(v - peak);
        total += peak + std::log(lse) - z[dataset::to_index(labels[i])];
    }
    return total / static_cast<double>(features.n);
}

TrainResult train_head(const fid::FeatureSet& features, std::span<const SeverityLabel> labels,
                       const TrainOptions& options) {
    if (labels.size() != features.n) throw ShapeError("train_head: label count differs from feature rows");
    for (auto l : dataset::kAllLabels)
        if (std::find(labels.begin(), labels.end(), l) == labels.end())
            throw MissingClassError("train_head: class '" + std::string(dataset::label_name(l)) +
                                    "' absent from training labels");
    if (options.batch == 0) throw DomainError("train_head: batch size must be positive");

    const std::size_t d = features.d;
    TrainResult result{LinearSoftmaxHead(d), {}};
    auto params = result.head.params();
    AdamState adam(params.size(), options.lr);
    Rng rng(options.seed);
    std::vector<std::size_t> order(features.n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grads(params.size());

    result.epoch_loss.push_back(cross_entropy(result.head, features, labels));
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += options.batch) {
            const std::size_t end = std::min(order.size(), start + options.batch);
            std::fill(grads.begin(), grads.end(), 0.0);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t b = start; b < end; ++b) {
                const auto x = features.row(order[b]);
                const auto p = result.head.predict_proba(x);
                const int y = dataset::to_index(labels[order[b]]);
                for (std::size_t k = 0; k < kNumClasses; ++k) {
                    const double delta = (p[k] - (static_cast<int>(k) == y ? 1.0 : 0.0)) * scale;
                    for (std::size_t j = 0; j < d; ++j) grads[k * d + j] += delta * x[j];
                    grads[kNumClasses * d + k] += delta;
                }
            }
            adam_step(params, grads, adam);
        }
        result.epoch_loss.push_back(cross_entropy(result.head, features, labels));
    }
    return result;
}

void ConfusionMatrix::add(SeverityLabel truth, SeverityLabel predicted) {
    ++counts[dataset::to_index(truth)][dataset::to_index(predicted)];
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
        for (auto c : row) t += c;
    return t;
}

std::uint64_t ConfusionMatrix::row_total(std::size_t truth) const {
    return std::accumulate(counts[truth].begin(), counts[truth].end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::column_total(std::size_t predicted) const {
    std::uint64_t t = 0;
    for (const auto& row : counts) t += row[predicted];
    return t;
}

CasReport report_from_confusion(const ConfusionMatrix& matrix) {
    CasReport r;
    r.matrix = matrix;
    const auto total = matrix.total();
    std::uint64_t diagonal = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) diagonal += matrix.counts[k][k];
    r.accuracy = total ? static_cast<double>(diagonal) / static_cast<double>(total) : 0.0;
    double f1_sum = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        const double tp = static_cast<double>(matrix.counts[k][k]);
        const double actual = static_cast<double>(matrix.row_total(k));
        const double predicted = static_cast<double>(matrix.column_total(k));
        const double recall = actual > 0 ? tp / actual : 0.0;
        const double precision = predicted > 0 ? tp / predicted : 0.0;
        r.per_class_recall[k] = recall;
        r.per_class_f1[k] = (precision + recall) > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        f1_sum += r.per_class_f1[k];
    }
    r.macro_f1 = f1_sum / static_cast<double>(kNumClasses);
    return r;
}

CasReport score_predictions(std::span<const SeverityLabel> truth, std::span<const SeverityLabel> predicted) {
    if (truth.size() != predicted.size()) throw ShapeError("score_predictions: length mismatch");
    ConfusionMatrix m;
    for (std::size_t i = 0; i < truth.size(); ++i) m.add(truth[i], predicted[i]);
    return report_from_confusion(m);
}

CasReport evaluate_cas(const LinearSoftmaxHead& head, const fid::FeatureSet& gen_features,
                       std::span<const SeverityLabel> labels) {
    if (labels.size() != gen_features.n) throw ShapeError("evaluate_cas: label count differs from feature rows");
    if (gen_features.d != head.dim())
        throw ShapeError("evaluate_cas: features have dimension " + std::to_string(gen_features.d) +
                         ", head expects " + std::to_string(head.dim()));
    std::vector<SeverityLabel> predicted;
    predicted.reserve(gen_features.n);
    for (std::size_t i = 0; i < gen_features.n; ++i) predicted.push_back(head.predict(gen_features.row(i)));
    return score_predictions(labels, predicted);
}

namespace {

static_assert(std::endian::native == std::endian::little, "head I/O assumes a little-endian host");

void put_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

}  // namespace

void write_head(const std::filesystem::path& path, const LinearSoftmaxHead& head) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write head: " + path.string());
    out.write("CVH1", 4);
    put_u32(out, static_cast<std::uint32_t>(kNumClasses));
    put_u32(out, static_cast<std::uint32_t>(head.dim()));
    const auto p = head.params();
    out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!out) throw IoError("short write: " + path.string());
}

LinearSoftmaxHead read_head(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open head: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "CVH1", 4) != 0) throw IoError("head: bad magic in " + path.string());
    std::uint32_t classes = 0, dim = 0;
    std::memcpy(&classes, bytes.data() + 4, 4);
    std::memcpy(&dim, bytes.data() + 8, 4);
    if (classes != kNumClasses) throw IoError("head: expected 3 classes, file declares " + std::to_string(classes));
    LinearSoftmaxHead head(dim);
    auto p = head.params();
    if (bytes.size() != 12 + p.size() * sizeof(double)) throw IoError("head: payload size does not match dimensions");
    std::memcpy(p.data(), bytes.data() + 12, p.size() * sizeof(double));
    for (double v : p)
        if (!std::isfinite(v)) throw IoError("head: non-finite parameter");
    return head;
}

namespace {

SeverityLabel require_label(const std::string& text, const std::filesystem::path& path) {
    const auto l = dataset::parse_label(text);
    if (!l) throw IoError(path.string() + ": invalid severity label '" + text + "'");
    return *l;
}

}  // namespace

std::vector<LabelRow> read_labels_csv(const std::filesystem::path& path) {
    const auto table = read_csv(path);
    const auto id_col = table.column("pair_id"), label_col = table.column("label");
    std::vector<LabelRow> out;
    std::set<std::string> seen;
    for (const auto& row : table.rows) {
        if (!seen.insert(row[id_col]).second) throw IoError(path.string() + ": duplicate pair id '" + row[id_col] + "'");
        out.push_back({row[id_col], require_label(row[label_col], path)});
    }
    return out;
}

void write_labels_csv(const std::filesystem::path& path, std::span<const LabelRow> rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write labels: " + path.string());
    out << "pair_id,label\n";
    for (const auto& r : rows) out << r.pair_id << ',' << dataset::label_name(r.label) << '\n';
}

std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
    const auto table = read_csv(path);
    const auto id_col = table.column("pair_id"), method_col = table.column("method"),
               pred_col = table.column("predicted_label");
    std::vector<PredictionRow> out;
    for (const auto& row : table.rows) out.push_back({row[id_col], row[method_col], require_label(row[pred_col], path)});
    return out;
}

void write_predictions_csv(const std::filesystem::path& path, std::span<const PredictionRow> rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write predictions: " + path.string());
    out << "pair_id,method,predicted_label\n";
    for (const auto& r : rows) out << r.pair_id << ',' << r.method << ',' << dataset::label_name(r.predicted) << '\n';
}

std::vector<MethodReport> score_prediction_file(std::span<const PredictionRow> predictions,
                                                std::span<const LabelRow> labels) {
    std::map<std::string, SeverityLabel> truth;
    for (const auto& l : labels) truth[l.pair_id] = l.label;
    std::vector<std::string> methods;
    std::map<std::string, std::map<std::string, SeverityLabel>> by_method;
    for (const auto& p : predictions) {
        if (!truth.contains(p.pair_id)) throw IoError("predictions: pair '" + p.pair_id + "' has no ground-truth label");
        if (!by_method.contains(p.method)) methods.push_back(p.method);
        if (!by_method[p.method].emplace(p.pair_id, p.predicted).second)
            throw IoError("predictions: pair '" + p.pair_id + "' predicted twice for method '" + p.method + "'");
    }
    std::vector<MethodReport> out;
    for (const auto& method : methods) {
        const auto& preds = by_method[method];
        ConfusionMatrix m;
        for (const auto& l : labels) {
            const auto it = preds.find(l.pair_id);
            if (it == preds.end())
                throw IoError("predictions: method '" + method + "' has no prediction for pair '" + l.pair_id + "'");
            m.add(l.label, it->second);
        }
        out.push_back({method, report_from_confusion(m)});
    }
    return out;
}

}  // namespace cve::cas
