// Acceptance gate: one PASS/FAIL line per headline criterion. Exits nonzero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cve/cas.hpp"
#include "cve/csv.hpp"
#include "cve/fidstats.hpp"
#include "cve/genkernel.hpp"
#include "cve/judge.hpp"
#include "cve/pixelmetrics.hpp"
#include "cve/report.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "verdict_fixtures.hpp"

using namespace cve;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    /// Records a failed check; keeps the first few messages.
    void require(bool ok, const std::string& what) {
        if (ok) return;
        if (pass) detail << "failed: ";
        else detail << "; ";
        detail << what;
        pass = false;
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    for (std::string line; std::getline(is, line);) out.push_back(line);
    return out;
}

fs::path toy_dir() { return test::fixture_dir() / "toy"; }

fid::FeatureSet gaussian_rows(Rng& rng, std::size_t n, const fid::Matrix& chol) {
    const std::size_t d = chol.rows;
    fid::FeatureSet fs{n, d, std::vector<double>(n * d)};
    std::vector<double> z(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : z) v = rng.normal();
        for (std::size_t r = 0; r < d; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c <= r; ++c) s += chol(r, c) * z[c];
            fs.rows[i * d + r] = s;
        }
    }
    return fs;
}

pixel::LayeredFeatures random_layers(Rng& rng) {
    pixel::LayeredFeatures f;
    for (std::size_t l = 0; l < 2; ++l) {
        pixel::FeatureMap m;
        m.name = "layer" + std::to_string(l);
        m.channels = 4 + l;
        m.height = 3;
        m.width = 5 - l;
        m.data.resize(m.channels * m.height * m.width);
        for (auto& v : m.data) v = rng.normal();
        m.weights.resize(m.channels);
        for (auto& w : m.weights) w = rng.uniform();
        f.layers.push_back(std::move(m));
    }
    return f;
}

Outcome metric_identities() {
    Outcome o;
    Rng rng(101);
    const auto t0 = Clock::now();
    double worst_ssim = 0.0, worst_lpips = 0.0, worst_fid = 0.0;
    for (int i = 0; i < 100; ++i) {
        const auto img = test::random_image(rng, 24 + i % 9, 20 + i % 13, i % 2 ? 3 : 1);
        const auto gray = to_grayscale(img);
        worst_ssim = std::max(worst_ssim, std::abs(pixel::ssim(gray, gray) - 1.0));
        o.require(std::isinf(pixel::psnr(img, img)) && pixel::psnr(img, img) > 0, "psnr(x,x) is not +inf");
        const auto f = random_layers(rng);
        worst_lpips = std::max(worst_lpips, std::abs(pixel::lpips(f, f)));
        fid::Matrix chol(6, 6);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c <= r; ++c) chol(r, c) = r == c ? 1.0 + rng.uniform() : rng.normal();
        const auto fs = gaussian_rows(rng, 40, chol);
        worst_fid = std::max(worst_fid, std::abs(fid::fid(fs, fs)));
    }
    const double secs = seconds_since(t0);
    o.require(worst_ssim <= 1e-9, "ssim(x,x) off by " + fmt(worst_ssim));
    o.require(worst_lpips <= 1e-9, "lpips(f,f) = " + fmt(worst_lpips));
    o.require(worst_fid <= 1e-6, "fid(F,F) = " + fmt(worst_fid));
    o.require(secs < 5.0, "took " + fmt(secs) + " s");
    if (o.pass)
        o.detail << "|ssim-1|<=" << fmt(worst_ssim) << " lpips<=" << fmt(worst_lpips) << " fid<=" << fmt(worst_fid)
                 << " in " << fmt(secs) << " s";
    return o;
}

Outcome ssim_oracle() {
    Outcome o;
    Rng rng(202);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto x = test::random_image(rng, 32, 32);
        auto y = x;
        // Correlated partner so SSIM spans a useful range.
        for (auto& v : y.data()) v = std::clamp(v + 0.3 * (rng.uniform() - 0.5) * (i % 4), 0.0, 1.0);
        worst = std::max(worst, std::abs(pixel::ssim(x, y) - test::naive_ssim(x, y)));
    }
    o.require(worst <= 1e-6, "max deviation " + fmt(worst));
    if (o.pass) o.detail << "max deviation " << fmt(worst) << " over 20 pairs";
    return o;
}

Outcome fid_closed_forms() {
    Outcome o;
    using fid::Matrix;
    const double mean_only =
        fid::frechet_distance({{0.0, 0.0}, Matrix::identity(2)}, {{3.0, 0.0}, Matrix::identity(2)});
    o.require(std::abs(mean_only - 9.0) <= 1e-9, "mean-shift case = " + fmt(mean_only));

    const double s1 = 1.7, s2 = 0.6;
    const double commuting = fid::frechet_distance({std::vector<double>(4, 0.0), Matrix::diagonal(std::vector<double>(4, s1 * s1))},
                                                   {std::vector<double>(4, 0.0), Matrix::diagonal(std::vector<double>(4, s2 * s2))});
    o.require(std::abs(commuting - 4 * (s1 - s2) * (s1 - s2)) <= 1e-6, "commuting case = " + fmt(commuting));

    Rng rng(303);
    double worst_sqrt = 0.0;
    for (int i = 0; i < 50; ++i) {
        const std::size_t d = 1 + static_cast<std::size_t>(i) * 63 / 49;
        const auto a = test::random_spd(rng, d);
        const auto r = fid::sqrtm_psd(a);
        worst_sqrt = std::max(worst_sqrt, test::relative_frobenius(r * r, a));
    }
    o.require(worst_sqrt <= 1e-6, "sqrtm reconstruction error " + fmt(worst_sqrt));

    Matrix chol(16, 16);
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c <= r; ++c) chol(r, c) = r == c ? 1.0 : 0.3 * rng.normal();
    const auto a = gaussian_rows(rng, 5000, chol);
    const auto b = gaussian_rows(rng, 5000, chol);
    const double sampled = fid::fid(a, b);
    o.require(sampled <= 0.5, "same-distribution FID " + fmt(sampled));
    if (o.pass)
        o.detail << "mean-shift " << mean_only << ", commuting " << commuting << ", sqrtm err " << fmt(worst_sqrt)
                 << ", 5000-sample FID " << fmt(sampled);
    return o;
}

Outcome diffusion_round_trip() {
    Outcome o;
    using namespace genkernel;
    Rng rng(404);
    double worst = 0.0;
    for (std::size_t steps : {1u, 10u, 50u}) {
        const auto sched = NoiseSchedule::linear(steps);
        Tensor z0({4, 4, 4}), eps({4, 4, 4});
        for (auto& v : z0.data) v = rng.normal();
        for (auto& v : eps.data) v = rng.normal();
        const auto zt = forward_diffuse(z0, steps, eps, sched);
        const auto back = reverse_loop(zt, FixedNoisePredictor(eps), Conditioning{{{0.0}}, std::nullopt}, sched);
        o.require(back.t == 0, "reverse loop did not reach t = 0");
        worst = std::max(worst, max_abs_diff(back.z, z0));
        for (std::size_t t = 0; t <= steps; ++t) {
            const double ab = sched.alpha_bar(t);
            const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
            // Coefficients as forward_diffuse applies them.
            const auto unit = forward_diffuse_with(Tensor({2}, std::vector<double>{1.0, 0.0}), ab,
                                                   Tensor({2}, std::vector<double>{0.0, 1.0}));
            o.require(unit.data[0] == a && unit.data[1] == s, "forward coefficients differ from sqrt(alpha_bar)");
            o.require(std::abs(a * a + s * s - 1.0) <= 1e-15, "coefficient identity fails at t=" + std::to_string(t));
        }
    }
    o.require(worst <= 1e-6, "round-trip error " + fmt(worst));
    if (o.pass) o.detail << "max-abs error " << fmt(worst) << " for T in {1,10,50}";
    return o;
}

Outcome moe_routing() {
    Outcome o;
    using namespace genkernel;
    Rng rng(505);
    std::vector<Tensor> experts;
    for (int k = 0; k < 3; ++k) {
        Tensor t({5});
        for (auto& v : t.data) v = rng.normal();
        experts.push_back(t);
    }
    for (std::size_t k = 0; k < 3; ++k) {
        RoutingWeights w{{0.0, 0.0, 0.0}};
        w.w[k] = 1.0;
        o.require(moe_aggregate(experts, w) == experts[k], "one-hot routing differs from expert " + std::to_string(k));
    }
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        auto params = RouterParams::zeros(3, 6);
        for (auto& v : params.weights) v = 3.0 * rng.normal();
        for (auto& v : params.bias) v = rng.normal();
        std::vector<double> x(6);
        for (auto& v : x) v = rng.normal();
        const auto w = route_weights(x, params);
        double sum = 0.0;
        for (double v : w.w) {
            o.require(v >= 0.0, "negative routing weight");
            sum += v;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    o.require(worst <= 1e-9, "weight sum off by " + fmt(worst));
    const std::vector<Tensor> scalars{Tensor::scalar(1.0), Tensor::scalar(2.0), Tensor::scalar(3.0)};
    const double hand = moe_aggregate(scalars, {{0.2, 0.3, 0.5}}).data[0];
    o.require(std::abs(hand - 2.3) <= 1e-12, "hand case = " + fmt(hand));
    if (o.pass) o.detail << "one-hot exact, |sum-1|<=" << fmt(worst) << " over 1000 routers, hand case " << hand;
    return o;
}

Outcome adam_optimizer() {
    Outcome o;
    std::vector<double> p{0.0};
    cas::AdamState st(1, 1e-4);
    cas::adam_step(p, std::vector<double>{1.0}, st);
    o.require(std::abs(p[0] - (-1e-4)) <= 1e-9, "first step " + fmt(p[0]));

    std::vector<double> theta{1.0};
    cas::AdamState q(1, 0.1);
    for (int i = 0; i < 500; ++i) cas::adam_step(theta, std::vector<double>{2.0 * theta[0]}, q);
    o.require(std::abs(theta[0]) < 1e-3, "quadratic ended at " + fmt(theta[0]));

    Rng rng(606);
    std::vector<std::vector<double>> rows;
    std::vector<cas::SeverityLabel> labels;
    for (int i = 0; i < 90; ++i) {
        const int c = i % 3;
        std::vector<double> r(5);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] = rng.normal() + (static_cast<int>(j) == c ? 2.0 : 0.0);
        rows.push_back(r);
        labels.push_back(dataset::label_from_index(c));
    }
    const auto fs = fid::FeatureSet::from_rows(rows);
    const auto a = cas::train_head(fs, labels, {5, 16, 1e-2, 9});
    const auto b = cas::train_head(fs, labels, {5, 16, 1e-2, 9});
    bool bitwise = a.head.params().size() == b.head.params().size() && a.epoch_loss.size() == b.epoch_loss.size();
    for (std::size_t i = 0; bitwise && i < a.head.params().size(); ++i)
        bitwise = std::memcmp(&a.head.params()[i], &b.head.params()[i], sizeof(double)) == 0;
    for (std::size_t i = 0; bitwise && i < a.epoch_loss.size(); ++i)
        bitwise = std::memcmp(&a.epoch_loss[i], &b.epoch_loss[i], sizeof(double)) == 0;
    o.require(bitwise, "seeded training is not bitwise reproducible");
    if (o.pass) o.detail << "first step " << p[0] << ", quadratic |theta| " << fmt(std::abs(theta[0]))
                         << ", training bitwise reproducible";
    return o;
}

Outcome cas_collapse_pattern() {
    Outcome o;
    test::TempDir dir;
    auto config = report::load_run_config(toy_dir() / "run.json");
    config.output_dir = dir / "out";
    config.tiers = {false, true, false};
    config.cas.pred_labels = toy_dir() / "pred_all_mild.csv";
    o.require(report::run_and_emit(config) == 0, "run reported pair errors");
    const auto table = lines_of(test::slurp(dir / "out" / "table2.csv"));
    o.require(table.size() == 2, "expected one method row");
    if (table.size() == 2) {
        const auto cells = split_csv_line(table[1]);
        o.require(cells.size() == 6 && cells[0] == "all_mild", "unexpected row '" + table[1] + "'");
        if (cells.size() == 6) {
            o.require(std::abs(std::stod(cells[1]) - 0.33) <= 0.01, "Acc. " + cells[1]);
            o.require(std::abs(std::stod(cells[2]) - 0.17) <= 0.01, "F1 " + cells[2]);
            o.require(cells[3] == "1.00" && cells[4] == "0.00" && cells[5] == "0.00",
                      "recall columns " + cells[3] + " " + cells[4] + " " + cells[5]);
        }
    }
    const auto record = report::read_record(dir / "out" / "record.json");
    const auto& m = record.table2->at(0).report.matrix;
    bool single_column = true;
    for (std::size_t t = 0; t < 3; ++t)
        single_column = single_column && m.counts[t][0] == 4 && m.counts[t][1] == 0 && m.counts[t][2] == 0;
    o.require(single_column, "confusion is not concentrated in the mild column");
    const auto svg = test::slurp(dir / "out" / "confusion_all_mild.svg");
    std::size_t dark = 0;
    for (auto pos = svg.find("fill=\"#08306b\""); pos != std::string::npos; pos = svg.find("fill=\"#08306b\"", pos + 1))
        ++dark;
    o.require(dark == 3, "heatmap has " + std::to_string(dark) + " saturated cells");
    if (o.pass) o.detail << "row '" << table[1] << "', heatmap single-column";
    return o;
}

class CountingTransport final : public judge::Transport {
public:
    judge::HttpResponse post(const judge::HttpRequest&) override {
        std::lock_guard lock(mu_);
        ++calls;
        const auto body = nlohmann::json{
            {"choices", {{{"message", {{"content", R"({"structural":4,"damage":3,"realism":2})"}}}}}}};
        return {200, body.dump(), std::nullopt};
    }
    std::size_t calls = 0;

private:
    std::mutex mu_;
};

Outcome judge_stub_pipeline() {
    Outcome o;
    test::TempDir dir;
    auto config = report::load_run_config(toy_dir() / "run.json");
    config.tiers = {false, false, true};
    for (const char* run : {"a", "b"}) {
        config.output_dir = dir / run;
        o.require(report::run_and_emit(config) == 0, std::string("stub run ") + run + " reported errors");
    }
    for (const char* f : {"table3.csv", "table3.md", "judge_verdicts.csv", "counts.csv"})
        o.require(test::slurp(dir / "a" / f) == test::slurp(dir / "b" / f), std::string(f) + " differs between runs");
    auto ra = report::read_record(dir / "a" / "record.json");
    auto rb = report::read_record(dir / "b" / "record.json");
    ra.timings.clear();
    rb.timings.clear();
    rb.config.output_dir = ra.config.output_dir;
    o.require(ra == rb, "records differ between runs");
    o.require(ra.verdicts.size() == 48, "expected 48 verdicts");

    std::size_t parsed = 0;
    for (const auto* cases : {&test::well_formed_verdicts(), &test::lenient_verdicts()})
        for (const auto& [raw, want] : *cases) {
            try {
                const auto v = judge::parse_verdict(raw);
                if (v.structural == want[0] && v.damage == want[1] && v.realism == want[2]) ++parsed;
            } catch (const std::exception&) {
            }
        }
    std::size_t typed = 0;
    for (const auto& [raw, kind] : test::malformed_verdicts()) {
        try {
            judge::parse_verdict(raw);
        } catch (const judge::VerdictParseError& e) {
            if (e.kind() == kind) ++typed;
        }
    }
    const auto total_good = test::well_formed_verdicts().size() + test::lenient_verdicts().size();
    o.require(total_good == 20 && parsed == total_good, "parsed " + std::to_string(parsed) + "/20 valid replies");
    o.require(test::malformed_verdicts().size() == 10 && typed == 10,
              "typed " + std::to_string(typed) + "/10 malformed replies");

    auto transport = std::make_shared<CountingTransport>();
    judge::ClientConfig cc;
    cc.endpoint = "http://judge.invalid/v1/chat/completions";
    cc.cache_dir = dir / "cache";
    cc.requests_per_second = 0;
    Rng rng(707);
    const judge::JudgeRequest req{"p001", "pix2pix", test::random_image(rng, 16, 16, 3),
                                  test::random_image(rng, 16, 16, 3), "v1"};
    {
        judge::JudgeClient first(cc, transport);
        first.judge_pair(req);
    }
    judge::JudgeClient second(cc, transport);
    const auto again = second.judge_pair(req);
    o.require(transport->calls == 1, "transport saw " + std::to_string(transport->calls) + " calls");
    o.require(second.live_calls() == 0 && again.source == judge::VerdictSource::Cache, "second call was not cached");
    if (o.pass) o.detail << "two stub runs identical, parser 20/20 + 10/10 typed, cached repeat made 0 live calls";
    return o;
}

Outcome end_to_end() {
    Outcome o;
    test::TempDir dir;
    auto config = report::load_run_config(toy_dir() / "run.json");
    config.output_dir = dir / "out";
    test::spit(dir / "run.json", report::run_config_to_json(config).dump(2));
    const std::string cmd = std::string("\"") + CVE_CLI_PATH + "\" run --config \"" + (dir / "run.json").string() +
                            "\" > \"" + (dir / "log.txt").string() + "\" 2>&1";
    const auto t0 = Clock::now();
    const int status = std::system(cmd.c_str());
    const double secs = seconds_since(t0);
    o.require(status == 0, "CLI exited with status " + std::to_string(status) + ": " + test::slurp(dir / "log.txt"));
    o.require(secs < 30.0, "took " + fmt(secs) + " s");
    const std::pair<const char*, const char*> headers[] = {{"table1.csv", "Method,SSIM,PSNR,LPIPS,FID"},
                                                           {"table2.csv", "Method,Acc.,F1,Mild,Mod.,Sev."},
                                                           {"table3.csv", "Method,Struct.,Damage,Realism"}};
    for (const auto& [file, header] : headers) {
        const auto lines = lines_of(test::slurp(dir / "out" / file));
        o.require(!lines.empty() && lines[0] == header, std::string(file) + " header mismatch");
        o.require(lines.size() >= 5, std::string(file) + " has too few rows");
    }
    try {
        const auto record = report::read_record(dir / "out" / "record.json");
        o.require(report::record_from_json(report::record_to_json(record)) == record, "record does not round-trip");
        o.require(record.errors.empty(), "record lists pair errors");
        o.require(record.table1 && record.table2 && record.table3, "record is missing a table");
    } catch (const std::exception& e) {
        o.require(false, std::string("record unreadable: ") + e.what());
    }
    if (o.pass) o.detail << "12 pairs x 4 methods in " << fmt(secs) << " s, exact headers, record round-trips";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"metric identities", metric_identities},
        {"SSIM oracle equivalence", ssim_oracle},
        {"FID closed forms", fid_closed_forms},
        {"diffusion round trip", diffusion_round_trip},
        {"MoE routing", moe_routing},
        {"Adam", adam_optimizer},
        {"CAS collapse pattern", cas_collapse_pattern},
        {"judge stub pipeline", judge_stub_pipeline},
        {"end-to-end run", end_to_end},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
        if (!o.pass) ++failed;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
