// crossview-eval: command-line front end for the evaluation harness.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cve/cas.hpp"
#include "cve/dataset.hpp"
#include "cve/features.hpp"
#include "cve/fidstats.hpp"
#include "cve/genkernel.hpp"
#include "cve/judge.hpp"
#include "cve/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cve;

namespace {

/// A single CVF file, or a directory of per-pair files stacked in `ids` order
/// (every *.cvf sorted by name when ids is empty).
fid::FeatureSet load_features(const fs::path& path, const std::vector<std::string>& ids = {}) {
    if (!fs::is_directory(path)) return fid::feature_set_from_cvf(read_cvf(path));
    std::vector<fs::path> files;
    if (ids.empty()) {
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.path().extension() == ".cvf") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
    } else {
        for (const auto& id : ids) files.push_back(path / (id + ".cvf"));
    }
    if (files.empty()) throw IoError("no .cvf files in " + path.string());
    std::vector<std::vector<double>> rows;
    for (const auto& f : files) {
        const auto one = fid::feature_set_from_cvf(read_cvf(f));
        for (std::size_t i = 0; i < one.n; ++i) rows.emplace_back(one.row(i).begin(), one.row(i).end());
    }
    return fid::FeatureSet::from_rows(rows);
}

std::vector<std::string> ids_of(const std::vector<cas::LabelRow>& labels) {
    std::vector<std::string> ids;
    for (const auto& l : labels) ids.push_back(l.pair_id);
    return ids;
}

std::vector<cas::SeverityLabel> labels_of(const std::vector<cas::LabelRow>& labels) {
    std::vector<cas::SeverityLabel> out;
    for (const auto& l : labels) out.push_back(l.label);
    return out;
}

json cas_json(const cas::CasReport& r) {
    json m = json::array();
    for (const auto& row : r.matrix.counts) m.push_back(row);
    return {{"accuracy", r.accuracy},
            {"macro_f1", r.macro_f1},
            {"per_class_recall", r.per_class_recall},
            {"per_class_f1", r.per_class_f1},
            {"confusion", m}};
}

void print_cas_row(const std::string& method, const cas::CasReport& r) {
    std::printf("%s,%s,%s,%s,%s,%s\n", method.c_str(), report::format_cell(r.accuracy, 2).c_str(),
                report::format_cell(r.macro_f1, 2).c_str(), report::format_cell(r.per_class_recall[0], 2).c_str(),
                report::format_cell(r.per_class_recall[1], 2).c_str(),
                report::format_cell(r.per_class_recall[2], 2).c_str());
}

void write_json(const fs::path& path, const json& doc) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

int genkernel_demo(std::uint64_t seed, std::size_t steps) {
    using namespace genkernel;
    Rng rng(seed);
    const auto sched = NoiseSchedule::linear(steps);
    Tensor z0({4, 4}), eps({4, 4});
    for (auto& v : z0.data) v = rng.normal();
    for (auto& v : eps.data) v = rng.normal();
    const auto noisy = forward_diffuse(z0, steps, eps, sched);
    Conditioning cond;
    cond.control = {{0.0}};
    const auto recovered = reverse_loop(noisy, FixedNoisePredictor(eps), cond, sched);
    std::printf("steps=%zu alpha_bar_T=%.6f round_trip_max_abs_error=%.3e\n", steps, sched.alpha_bar(steps),
                max_abs_diff(recovered.z, z0));

    std::vector<double> features{0.2, -0.4, 0.9};
    RouterParams router = RouterParams::zeros(3, features.size());
    for (auto& w : router.weights) w = rng.normal();
    const auto w = route_weights(features, router);
    std::printf("router weights: %.4f %.4f %.4f\n", w.w[0], w.w[1], w.w[2]);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-view synthesis evaluation harness", "crossview-eval"};
    app.set_version_flag("--version", std::string(CVE_VERSION));
    app.require_subcommand(1);

    // dataset
    auto* ds = app.add_subcommand("dataset", "Manifest utilities");
    ds->require_subcommand(1);
    fs::path split_manifest, split_out;
    std::size_t per_class = 0;
    std::uint64_t split_seed = 0;
    auto* split = ds->add_subcommand("split", "Stratified test/train split");
    split->add_option("--manifest", split_manifest)->required();
    split->add_option("--per-class", per_class, "Test pairs per class")->required();
    split->add_option("--seed", split_seed);
    split->add_option("--out", split_out, "Directory for test.json and train.json")->required();

    dataset::ToyCorpusOptions toy;
    fs::path toy_out;
    auto* synth = ds->add_subcommand("synth-toy", "Write the procedural toy corpus");
    synth->add_option("--n", toy.n_per_class, "Pairs per class");
    synth->add_option("--size", toy.size, "Image edge in pixels");
    synth->add_option("--seed", toy.seed);
    synth->add_option("--out", toy_out)->required();
    synth->add_flag("--with-features", toy.with_features, "Also write fixture feature files");

    // genkernel
    auto* gk = app.add_subcommand("genkernel", "Generative kernel utilities");
    gk->require_subcommand(1);
    std::uint64_t gk_seed = 0;
    std::size_t gk_steps = 50;
    auto* demo = gk->add_subcommand("demo", "Forward/reverse diffusion round trip and a routing example");
    demo->add_option("--seed", gk_seed);
    demo->add_option("--steps", gk_steps)->check(CLI::PositiveNumber);

    // tier1
    fs::path t1_manifest, t1_features, t1_out;
    std::vector<std::string> t1_methods;
    auto* tier1 = app.add_subcommand("tier1", "Pixel metrics, LPIPS and FID per method");
    tier1->add_option("--manifest", t1_manifest)->required();
    tier1->add_option("--features-dir", t1_features);
    tier1->add_option("--method", t1_methods, "Repeatable; default every manifest method");
    tier1->add_option("--out", t1_out)->required();

    // fid
    fs::path fid_real, fid_gen;
    auto* fidc = app.add_subcommand("fid", "Frechet distance between two feature sets");
    fidc->add_option("--real-features", fid_real, "CVF file or directory")->required();
    fidc->add_option("--gen-features", fid_gen, "CVF file or directory")->required();

    // cas
    auto* casc = app.add_subcommand("cas", "Classification Accuracy Score");
    casc->require_subcommand(1);
    fs::path tr_features, tr_labels, tr_out;
    cas::TrainOptions tr_opts;
    auto* train = casc->add_subcommand("train", "Train the linear severity head on real features");
    train->add_option("--features", tr_features, "CVF file or per-pair directory")->required();
    train->add_option("--labels", tr_labels)->required();
    train->add_option("--seed", tr_opts.seed);
    train->add_option("--epochs", tr_opts.epochs);
    train->add_option("--batch", tr_opts.batch);
    train->add_option("--lr", tr_opts.lr);
    train->add_option("--out", tr_out)->required();

    fs::path ev_head, ev_features, ev_labels, ev_out, ev_pred;
    auto* eval = casc->add_subcommand("eval", "Score generated features or an external prediction file");
    eval->add_option("--head", ev_head);
    eval->add_option("--features", ev_features);
    eval->add_option("--pred-labels", ev_pred, "CSV pair_id,method,predicted_label");
    eval->add_option("--labels", ev_labels)->required();
    eval->add_option("--out", ev_out, "Report JSON");

    // judge
    fs::path jm_manifest, jm_cache, jm_out;
    std::string jm_method, jm_provider, jm_model = "gemini-2.5-flash", jm_rubric = judge::kDefaultRubric;
    bool jm_stub = false;
    auto* judgec = app.add_subcommand("judge", "Score one method with the vision-language judge");
    judgec->add_option("--manifest", jm_manifest)->required();
    judgec->add_option("--method", jm_method)->required();
    judgec->add_option("--provider", jm_provider, "Chat-completions URL (default CVE_API_URL)");
    judgec->add_option("--model", jm_model);
    judgec->add_option("--cache", jm_cache, "Verdict cache directory");
    judgec->add_option("--rubric", jm_rubric);
    judgec->add_option("--out", jm_out, "Verdict CSV");
    judgec->add_flag("--stub", jm_stub, "Deterministic offline verdicts");

    // run / report
    fs::path run_cfg;
    auto* run = app.add_subcommand("run", "Run every enabled tier from a config file");
    run->add_option("--config", run_cfg)->required();
    fs::path rep_record, rep_out;
    auto* rep = app.add_subcommand("report", "Re-emit tables and figures from a run record");
    rep->add_option("--record", rep_record)->required();
    rep->add_option("--out", rep_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (split->parsed()) {
            const auto manifest = dataset::load_manifest(split_manifest);
            const auto [test, train_set] = dataset::stratified_split(manifest, per_class, split_seed);
            dataset::save_manifest(test, split_out / "test.json");
            dataset::save_manifest(train_set, split_out / "train.json");
            std::printf("test %zu pairs, train %zu pairs\n", test.pairs.size(), train_set.pairs.size());
            return 0;
        }
        if (synth->parsed()) {
            const auto m = dataset::synth_toy_corpus(toy, toy_out);
            std::printf("wrote %zu pairs to %s\n", m.pairs.size(), toy_out.string().c_str());
            return 0;
        }
        if (demo->parsed()) return genkernel_demo(gk_seed, gk_steps);
        if (tier1->parsed()) {
            report::RunConfig cfg;
            cfg.manifest = fs::absolute(t1_manifest);
            cfg.features_dir = t1_features.empty() ? fs::path{} : fs::absolute(t1_features);
            cfg.output_dir = fs::absolute(t1_out);
            cfg.methods = t1_methods;
            cfg.tiers = {true, false, false};
            const auto record = report::run_all(cfg);
            report::emit_tables(record, cfg.output_dir);
            std::cout << std::ifstream(cfg.output_dir / "table1.csv").rdbuf();
            for (const auto& e : record.errors)
                std::fprintf(stderr, "%s %s %s: %s\n", e.tier.c_str(), e.method.c_str(), e.pair_id.c_str(),
                             e.message.c_str());
            return record.errors.empty() ? 0 : 2;
        }
        if (fidc->parsed()) {
            std::printf("%.6f\n", fid::fid(load_features(fid_real), load_features(fid_gen)));
            return 0;
        }
        if (train->parsed()) {
            const auto labels = cas::read_labels_csv(tr_labels);
            const auto result = cas::train_head(load_features(tr_features, ids_of(labels)), labels_of(labels), tr_opts);
            cas::write_head(tr_out, result.head);
            std::printf("trained head d=%zu, loss %.6f -> %.6f\n", result.head.dim(), result.epoch_loss.front(),
                        result.epoch_loss.back());
            return 0;
        }
        if (eval->parsed()) {
            const auto labels = cas::read_labels_csv(ev_labels);
            json out = json::object();
            std::printf("Method,Acc.,F1,Mild,Mod.,Sev.\n");
            if (!ev_pred.empty()) {
                const auto preds = cas::read_predictions_csv(ev_pred);
                for (const auto& m : cas::score_prediction_file(preds, labels)) {
                    print_cas_row(m.method, m.report);
                    out[m.method] = cas_json(m.report);
                }
            } else {
                if (ev_head.empty() || ev_features.empty())
                    throw report::ConfigError("cas eval needs --head and --features, or --pred-labels");
                const auto head = cas::read_head(ev_head);
                const auto r = cas::evaluate_cas(head, load_features(ev_features, ids_of(labels)), labels_of(labels));
                print_cas_row("generated", r);
                out = cas_json(r);
            }
            if (!ev_out.empty()) write_json(ev_out, out);
            return 0;
        }
        if (judgec->parsed()) {
            const auto manifest = dataset::load_manifest(jm_manifest);
            judge::ClientConfig cc;
            cc.stub = jm_stub;
            cc.endpoint = jm_provider;
            cc.model = jm_model;
            cc.cache_dir = jm_cache;
            cc.apply_environment();
            if (!cc.stub && cc.endpoint.empty())
                throw report::ConfigError("judge: no endpoint; pass --provider, set CVE_API_URL or use --stub");
            std::shared_ptr<judge::Transport> transport;
            if (!cc.stub) transport = std::make_shared<judge::HttpTransport>();
            judge::JudgeClient client(cc, transport);
            std::vector<judge::JudgeRequest> requests;
            for (const auto& pair : manifest.pairs) {
                const auto it = pair.generated.find(jm_method);
                if (it == pair.generated.end())
                    throw report::ConfigError("pair '" + pair.id + "' has no image for method '" + jm_method + "'");
                requests.push_back({pair.id, jm_method, read_image(it->second), read_image(pair.street_path), jm_rubric});
            }
            const auto outcomes = client.judge_many(requests);
            std::ostringstream csv;
            csv << "pair_id,method,structural,damage,realism,source\n";
            std::vector<judge::JudgeVerdict> ok;
            int failed = 0;
            for (std::size_t i = 0; i < outcomes.size(); ++i) {
                if (!outcomes[i].verdict) {
                    std::fprintf(stderr, "%s: %s\n", requests[i].pair_id.c_str(), outcomes[i].error.c_str());
                    ++failed;
                    continue;
                }
                const auto& v = *outcomes[i].verdict;
                csv << requests[i].pair_id << ',' << jm_method << ',' << v.structural << ',' << v.damage << ','
                    << v.realism << ',' << judge::source_name(v.source) << '\n';
                ok.push_back(v);
            }
            if (!jm_out.empty()) {
                std::ofstream(jm_out) << csv.str();
            } else {
                std::cout << csv.str();
            }
            if (!ok.empty()) {
                const auto mean = judge::aggregate_verdicts(ok);
                std::printf("Method,Struct.,Damage,Realism\n%s,%s,%s,%s\n", jm_method.c_str(),
                            report::format_cell(mean.structural, 2).c_str(),
                            report::format_cell(mean.damage, 2).c_str(),
                            report::format_cell(mean.realism, 2).c_str());
            }
            return failed ? 2 : 0;
        }
        if (run->parsed()) {
            const auto cfg = report::load_run_config(run_cfg);
            const int code = report::run_and_emit(cfg);
            std::printf("record: %s\n", (cfg.output_dir / "record.json").string().c_str());
            if (code != 0) std::fprintf(stderr, "completed with per-pair errors; see record.json\n");
            return code;
        }
        if (rep->parsed()) {
            const auto record = report::read_record(rep_record);
            for (const auto& p : report::emit_tables(record, rep_out)) std::printf("%s\n", p.string().c_str());
            if (record.table2)
                for (const auto& p : report::emit_confusion_figures(record, rep_out))
                    std::printf("%s\n", p.string().c_str());
            return 0;
        }
    } catch (const report::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
