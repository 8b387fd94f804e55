#include "cve/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "cve/image.hpp"
#include "cve/pixelmetrics.hpp"

namespace cve::report {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    const fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

json path_json(const fs::path& p) { return p.generic_string(); }

json opt_path_json(const std::optional<fs::path>& p) { return p ? json(p->generic_string()) : json(nullptr); }

// Non-finite doubles are stored as strings so the JSON stays standard.
json num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double get_num(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        throw IoError("record: unexpected numeric string '" + s + "'");
    }
    return j.get<double>();
}

json opt_num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

std::optional<double> get_opt_num(const json& j) {
    if (j.is_null()) return std::nullopt;
    return get_num(j);
}

template <typename T>
std::array<double, cas::kNumClasses> get_triple(const json& j) {
    std::array<double, cas::kNumClasses> out{};
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_num(j.at(i));
    return out;
}

json triple(const std::array<double, cas::kNumClasses>& a) { return json::array({num(a[0]), num(a[1]), num(a[2])}); }

json cas_report_json(const cas::CasReport& r) {
    json matrix = json::array();
    for (const auto& row : r.matrix.counts) matrix.push_back(row);
    return {{"accuracy", num(r.accuracy)},
            {"macro_f1", num(r.macro_f1)},
            {"per_class_recall", triple(r.per_class_recall)},
            {"per_class_f1", triple(r.per_class_f1)},
            {"confusion", matrix}};
}

cas::CasReport cas_report_from(const json& j) {
    cas::CasReport r;
    r.accuracy = get_num(j.at("accuracy"));
    r.macro_f1 = get_num(j.at("macro_f1"));
    r.per_class_recall = get_triple<double>(j.at("per_class_recall"));
    r.per_class_f1 = get_triple<double>(j.at("per_class_f1"));
    for (std::size_t t = 0; t < cas::kNumClasses; ++t)
        for (std::size_t p = 0; p < cas::kNumClasses; ++p)
            r.matrix.counts[t][p] = j.at("confusion").at(t).at(p).get<std::uint64_t>();
    return r;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        if (!out) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string file_stem_for(const std::string& method) {
    std::string out;
    for (unsigned char c : method) out.push_back(std::isalnum(c) || c == '-' ? static_cast<char>(c) : '_');
    return out;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

/// One feature vector per file; nullopt when the file does not exist.
std::optional<std::vector<double>> load_vector(const fs::path& path) {
    if (!fs::exists(path)) return std::nullopt;
    const auto set = fid::feature_set_from_cvf(read_cvf(path));
    if (set.n != 1) throw ShapeError(path.string() + ": expected a single feature vector, found " +
                                     std::to_string(set.n) + " rows");
    const auto row = set.row(0);
    return std::vector<double>(row.begin(), row.end());
}

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::string to_csv(const Table& t) {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
        os << '\n';
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
    return os.str();
}

std::string to_markdown(const Table& t, const std::vector<std::string>& footnotes) {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
        os << '|';
        for (const auto& c : cells) os << ' ' << c << " |";
        os << '\n';
    };
    line(t.header);
    os << '|';
    for (std::size_t i = 0; i < t.header.size(); ++i) os << "---|";
    os << '\n';
    for (const auto& r : t.rows) line(r);
    if (!footnotes.empty()) {
        os << '\n';
        for (const auto& f : footnotes) os << f << "\n";
    }
    return os.str();
}

std::string count_note(const std::string& method, std::size_t evaluated, std::size_t failed) {
    return "- " + method + ": " + std::to_string(evaluated) + " evaluated, " + std::to_string(failed) + " failed";
}

}  // namespace

// ---------------------------------------------------------------- config

RunConfig run_config_from_json(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) throw ConfigError("run config: top level must be an object");
    RunConfig c;
    try {
        if (!doc.contains("manifest")) throw ConfigError("run config: missing 'manifest'");
        if (!doc.contains("output_dir")) throw ConfigError("run config: missing 'output_dir'");
        c.manifest = resolve(base_dir, doc.at("manifest").get<std::string>());
        c.output_dir = resolve(base_dir, doc.at("output_dir").get<std::string>());
        c.features_dir = resolve(base_dir, doc.value("features_dir", std::string{}));
        if (doc.contains("methods")) c.methods = doc.at("methods").get<std::vector<std::string>>();
        if (doc.contains("tiers")) {
            const auto& t = doc.at("tiers");
            c.tiers.pixel = t.value("pixel", c.tiers.pixel);
            c.tiers.cas = t.value("cas", c.tiers.cas);
            c.tiers.judge = t.value("judge", c.tiers.judge);
        }
        if (doc.contains("cas")) {
            const auto& s = doc.at("cas");
            c.cas.epochs = s.value("epochs", c.cas.epochs);
            c.cas.batch = s.value("batch", c.cas.batch);
            c.cas.lr = s.value("lr", c.cas.lr);
            c.cas.seed = s.value("seed", c.cas.seed);
            if (s.contains("train_manifest") && !s.at("train_manifest").is_null())
                c.cas.train_manifest = resolve(base_dir, s.at("train_manifest").get<std::string>());
            if (s.contains("pred_labels") && !s.at("pred_labels").is_null())
                c.cas.pred_labels = resolve(base_dir, s.at("pred_labels").get<std::string>());
        }
        if (doc.contains("judge")) {
            const auto& s = doc.at("judge");
            c.judge.stub = s.value("stub", c.judge.stub);
            c.judge.endpoint = s.value("endpoint", c.judge.endpoint);
            c.judge.model = s.value("model", c.judge.model);
            c.judge.cache_dir = resolve(base_dir, s.value("cache_dir", std::string{}));
            c.judge.rubric_version = s.value("rubric_version", c.judge.rubric_version);
            c.judge.max_in_flight = s.value("max_in_flight", c.judge.max_in_flight);
            c.judge.max_edge = s.value("max_edge", c.judge.max_edge);
            c.judge.requests_per_second = s.value("requests_per_second", c.judge.requests_per_second);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    return c;
}

json run_config_to_json(const RunConfig& c) {
    return {{"manifest", path_json(c.manifest)},
            {"methods", c.methods},
            {"features_dir", path_json(c.features_dir)},
            {"output_dir", path_json(c.output_dir)},
            {"tiers", {{"pixel", c.tiers.pixel}, {"cas", c.tiers.cas}, {"judge", c.tiers.judge}}},
            {"cas",
             {{"epochs", c.cas.epochs},
              {"batch", c.cas.batch},
              {"lr", c.cas.lr},
              {"seed", c.cas.seed},
              {"train_manifest", opt_path_json(c.cas.train_manifest)},
              {"pred_labels", opt_path_json(c.cas.pred_labels)}}},
            {"judge",
             {{"stub", c.judge.stub},
              {"endpoint", c.judge.endpoint},
              {"model", c.judge.model},
              {"cache_dir", path_json(c.judge.cache_dir)},
              {"rubric_version", c.judge.rubric_version},
              {"max_in_flight", c.judge.max_in_flight},
              {"max_edge", c.judge.max_edge},
              {"requests_per_second", c.judge.requests_per_second}}}};
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("run config: cannot open " + path.string());
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("run config: " + path.string() + " is not valid JSON");
    return run_config_from_json(doc, fs::absolute(path).parent_path());
}

void validate(const RunConfig& c) {
    if (!c.tiers.pixel && !c.tiers.cas && !c.tiers.judge) throw ConfigError("run config: every tier is disabled");
    if (!fs::is_regular_file(c.manifest)) throw ConfigError("run config: manifest not found: " + c.manifest.string());
    if (c.output_dir.empty()) throw ConfigError("run config: output_dir is empty");
    if (!c.features_dir.empty() && !fs::is_directory(c.features_dir))
        throw ConfigError("run config: features_dir not found: " + c.features_dir.string());
    if (c.tiers.cas) {
        if (c.cas.pred_labels) {
            if (!fs::is_regular_file(*c.cas.pred_labels))
                throw ConfigError("run config: pred_labels not found: " + c.cas.pred_labels->string());
        } else {
            if (c.features_dir.empty()) throw ConfigError("run config: the CAS tier needs features_dir or pred_labels");
            if (c.cas.epochs == 0 || c.cas.batch == 0 || !(c.cas.lr > 0.0))
                throw ConfigError("run config: cas epochs, batch and lr must be positive");
        }
        if (c.cas.train_manifest && !fs::is_regular_file(*c.cas.train_manifest))
            throw ConfigError("run config: train_manifest not found: " + c.cas.train_manifest->string());
    }
    if (c.tiers.judge) {
        try {
            judge::rubric_text(c.judge.rubric_version);
        } catch (const DomainError& e) {
            throw ConfigError(std::string("run config: ") + e.what());
        }
        if (!c.judge.stub && c.judge.endpoint.empty() && !std::getenv("CVE_API_URL"))
            throw ConfigError("run config: live judge needs judge.endpoint or CVE_API_URL");
        if (c.judge.max_in_flight == 0) throw ConfigError("run config: judge.max_in_flight must be positive");
    }
}

// ---------------------------------------------------------------- record

json record_to_json(const RunRecord& r) {
    json doc;
    doc["schema_version"] = r.schema_version;
    doc["tool_version"] = r.tool_version;
    doc["config"] = run_config_to_json(r.config);
    doc["rubric_version"] = r.rubric_version;
    json rows = json::array();
    for (const auto& row : r.tier1_rows)
        rows.push_back({{"pair_id", row.pair_id},
                        {"method", row.method},
                        {"ssim", num(row.ssim)},
                        {"psnr_db", num(row.psnr_db)},
                        {"lpips", opt_num(row.lpips)}});
    doc["tier1_rows"] = rows;
    if (r.table1) {
        json t = json::array();
        for (const auto& s : *r.table1)
            t.push_back({{"method", s.method},
                         {"evaluated", s.evaluated},
                         {"failed", s.failed},
                         {"ssim", num(s.ssim)},
                         {"psnr_db", num(s.psnr_db)},
                         {"lpips", opt_num(s.lpips)},
                         {"fid", opt_num(s.fid)}});
        doc["table1"] = t;
    } else {
        doc["table1"] = nullptr;
    }
    if (r.table2) {
        json t = json::array();
        for (const auto& s : *r.table2)
            t.push_back({{"method", s.method},
                         {"evaluated", s.evaluated},
                         {"failed", s.failed},
                         {"report", cas_report_json(s.report)}});
        doc["table2"] = t;
    } else {
        doc["table2"] = nullptr;
    }
    if (r.table3) {
        json t = json::array();
        for (const auto& s : *r.table3)
            t.push_back({{"method", s.method},
                         {"evaluated", s.evaluated},
                         {"failed", s.failed},
                         {"structural", num(s.scores.structural)},
                         {"damage", num(s.scores.damage)},
                         {"realism", num(s.scores.realism)},
                         {"count", s.scores.count}});
        doc["table3"] = t;
    } else {
        doc["table3"] = nullptr;
    }
    json verdicts = json::array();
    for (const auto& v : r.verdicts)
        verdicts.push_back({{"pair_id", v.pair_id},
                            {"method", v.method},
                            {"structural", v.structural},
                            {"damage", v.damage},
                            {"realism", v.realism},
                            {"source", v.source}});
    doc["verdicts"] = verdicts;
    json errors = json::array();
    for (const auto& e : r.errors)
        errors.push_back({{"tier", e.tier}, {"method", e.method}, {"pair_id", e.pair_id}, {"message", e.message}});
    doc["errors"] = errors;
    json timings = json::object();
    for (const auto& [k, v] : r.timings) timings[k] = num(v);
    doc["timings"] = timings;
    return doc;
}

RunRecord record_from_json(const json& doc) {
    RunRecord r;
    try {
        r.schema_version = doc.at("schema_version").get<int>();
        if (r.schema_version != kRecordSchemaVersion)
            throw IoError("record: unsupported schema_version " + std::to_string(r.schema_version));
        r.tool_version = doc.at("tool_version").get<std::string>();
        r.config = run_config_from_json(doc.at("config"), fs::path("/"));
        r.rubric_version = doc.at("rubric_version").get<std::string>();
        for (const auto& row : doc.at("tier1_rows"))
            r.tier1_rows.push_back({row.at("pair_id").get<std::string>(), row.at("method").get<std::string>(),
                                    get_num(row.at("ssim")), get_num(row.at("psnr_db")),
                                    get_opt_num(row.at("lpips"))});
        if (!doc.at("table1").is_null()) {
            r.table1.emplace();
            for (const auto& s : doc.at("table1"))
                r.table1->push_back({s.at("method").get<std::string>(), s.at("evaluated").get<std::size_t>(),
                                     s.at("failed").get<std::size_t>(), get_num(s.at("ssim")),
                                     get_num(s.at("psnr_db")), get_opt_num(s.at("lpips")), get_opt_num(s.at("fid"))});
        }
        if (!doc.at("table2").is_null()) {
            r.table2.emplace();
            for (const auto& s : doc.at("table2"))
                r.table2->push_back({s.at("method").get<std::string>(), s.at("evaluated").get<std::size_t>(),
                                     s.at("failed").get<std::size_t>(), cas_report_from(s.at("report"))});
        }
        if (!doc.at("table3").is_null()) {
            r.table3.emplace();
            for (const auto& s : doc.at("table3"))
                r.table3->push_back({s.at("method").get<std::string>(),
                                     s.at("evaluated").get<std::size_t>(),
                                     s.at("failed").get<std::size_t>(),
                                     {get_num(s.at("structural")), get_num(s.at("damage")), get_num(s.at("realism")),
                                      s.at("count").get<std::size_t>()}});
        }
        for (const auto& v : doc.at("verdicts"))
            r.verdicts.push_back({v.at("pair_id").get<std::string>(), v.at("method").get<std::string>(),
                                  v.at("structural").get<int>(), v.at("damage").get<int>(), v.at("realism").get<int>(),
                                  v.at("source").get<std::string>()});
        for (const auto& e : doc.at("errors"))
            r.errors.push_back({e.at("tier").get<std::string>(), e.at("method").get<std::string>(),
                                e.at("pair_id").get<std::string>(), e.at("message").get<std::string>()});
        for (const auto& [k, v] : doc.at("timings").items()) r.timings[k] = get_num(v);
    } catch (const json::exception& e) {
        throw IoError(std::string("record: ") + e.what());
    } catch (const ConfigError& e) {
        throw IoError(std::string("record: ") + e.what());
    }
    return r;
}

void write_record(const fs::path& path, const RunRecord& record) {
    write_text_atomic(path, record_to_json(record).dump(2) + "\n");
}

RunRecord read_record(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open record " + path.string());
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw IoError("record " + path.string() + " is not valid JSON");
    return record_from_json(doc);
}

// ---------------------------------------------------------------- tiers

namespace {

struct RunContext {
    const RunConfig& config;
    const dataset::Manifest& manifest;
    const std::vector<std::string>& methods;
    RunRecord& record;

    void fail(const char* tier, const std::string& method, const std::string& pair_id, const std::string& message) {
        record.errors.push_back({tier, method, pair_id, message});
    }
};

std::optional<double> method_fid(RunContext& ctx, const std::string& method) {
    const auto& dir = ctx.config.features_dir;
    if (dir.empty() || !fs::is_directory(dir / kFidKind / method)) return std::nullopt;
    std::vector<std::vector<double>> real, gen;
    for (const auto& pair : ctx.manifest.pairs) {
        try {
            auto r = load_vector(feature_path(dir, kFidKind, kStreetRole, pair.id));
            auto g = load_vector(feature_path(dir, kFidKind, method, pair.id));
            if (!r || !g) {
                ctx.fail("fid", method, pair.id, "missing FID features");
                continue;
            }
            real.push_back(std::move(*r));
            gen.push_back(std::move(*g));
        } catch (const std::exception& e) {
            ctx.fail("fid", method, pair.id, e.what());
        }
    }
    if (real.size() < 2) return std::nullopt;
    try {
        return fid::fid(fid::FeatureSet::from_rows(real), fid::FeatureSet::from_rows(gen));
    } catch (const std::exception& e) {
        ctx.fail("fid", method, "", e.what());
        return std::nullopt;
    }
}

std::vector<Tier1Summary> run_pixel_tier(RunContext& ctx) {
    std::vector<Tier1Summary> table;
    const auto& dir = ctx.config.features_dir;
    for (const auto& method : ctx.methods) {
        Tier1Summary s;
        s.method = method;
        double ssim_sum = 0.0, psnr_sum = 0.0, lpips_sum = 0.0;
        std::size_t lpips_n = 0;
        for (const auto& pair : ctx.manifest.pairs) {
            try {
                const auto it = pair.generated.find(method);
                if (it == pair.generated.end()) throw IoError("no generated image for method '" + method + "'");
                const auto ref = read_image(pair.street_path);
                const auto gen = read_image(it->second);
                if (!ref.same_shape(gen)) throw ShapeError("generated and street images differ in shape");
                pixel::PixelMetricRow row{pair.id, method, 0.0, 0.0, std::nullopt};
                row.ssim = ref.channels() == 1 ? pixel::ssim(ref, gen) : pixel::ssim_luma(ref, gen);
                row.psnr_db = pixel::psnr(ref, gen);
                if (!dir.empty()) {
                    const auto fr = feature_path(dir, kLpipsKind, kStreetRole, pair.id);
                    const auto fg = feature_path(dir, kLpipsKind, method, pair.id);
                    if (fs::exists(fr) && fs::exists(fg))
                        row.lpips = pixel::lpips(pixel::layered_from_cvf(read_cvf(fr)),
                                                 pixel::layered_from_cvf(read_cvf(fg)));
                }
                ssim_sum += row.ssim;
                psnr_sum += row.psnr_db;
                if (row.lpips) {
                    lpips_sum += *row.lpips;
                    ++lpips_n;
                }
                ++s.evaluated;
                ctx.record.tier1_rows.push_back(std::move(row));
            } catch (const std::exception& e) {
                ++s.failed;
                ctx.fail("pixel", method, pair.id, e.what());
            }
        }
        if (s.evaluated > 0) {
            s.ssim = ssim_sum / static_cast<double>(s.evaluated);
            s.psnr_db = psnr_sum / static_cast<double>(s.evaluated);
        }
        if (lpips_n > 0) s.lpips = lpips_sum / static_cast<double>(lpips_n);
        s.fid = method_fid(ctx, method);
        table.push_back(std::move(s));
    }
    return table;
}

fid::FeatureSet training_features(const RunConfig& config, const dataset::Manifest& train,
                                  std::vector<cas::SeverityLabel>& labels) {
    std::vector<std::vector<double>> rows;
    for (const auto& pair : train.pairs) {
        const auto path = feature_path(config.features_dir, kCasKind, kStreetRole, pair.id);
        std::optional<std::vector<double>> v;
        try {
            v = load_vector(path);
        } catch (const std::exception& e) {
            throw ConfigError("CAS training features unreadable: " + std::string(e.what()));
        }
        if (!v) throw ConfigError("CAS training features missing: " + path.string());
        rows.push_back(std::move(*v));
        labels.push_back(pair.label);
    }
    if (rows.empty()) throw ConfigError("CAS training manifest is empty");
    return fid::FeatureSet::from_rows(rows);
}

Tier2Summary evaluate_role(RunContext& ctx, const cas::LinearSoftmaxHead& head, const std::string& role,
                           const std::string& row_name) {
    Tier2Summary s;
    s.method = row_name;
    std::vector<cas::SeverityLabel> truth, predicted;
    for (const auto& pair : ctx.manifest.pairs) {
        try {
            const auto v = load_vector(feature_path(ctx.config.features_dir, kCasKind, role, pair.id));
            if (!v) throw IoError("missing CAS features");
            if (v->size() != head.dim())
                throw ShapeError("CAS feature dimension " + std::to_string(v->size()) + " != head dimension " +
                                 std::to_string(head.dim()));
            predicted.push_back(head.predict(*v));
            truth.push_back(pair.label);
            ++s.evaluated;
        } catch (const std::exception& e) {
            ++s.failed;
            ctx.fail("cas", row_name, pair.id, e.what());
        }
    }
    if (s.evaluated > 0) s.report = cas::score_predictions(truth, predicted);
    return s;
}

std::vector<Tier2Summary> run_cas_tier(RunContext& ctx) {
    std::vector<Tier2Summary> table;
    const auto& cfg = ctx.config.cas;
    if (cfg.pred_labels) {
        std::vector<cas::LabelRow> labels;
        for (const auto& pair : ctx.manifest.pairs) labels.push_back({pair.id, pair.label});
        try {
            const auto predictions = cas::read_predictions_csv(*cfg.pred_labels);
            for (auto& m : cas::score_prediction_file(predictions, labels))
                table.push_back({m.method, labels.size(), 0, m.report});
        } catch (const Error& e) {
            throw ConfigError(std::string("pred_labels: ") + e.what());
        }
        return table;
    }

    std::optional<dataset::Manifest> separate;
    if (cfg.train_manifest) {
        try {
            separate = dataset::load_manifest(*cfg.train_manifest);
        } catch (const Error& e) {
            throw ConfigError(std::string("train_manifest: ") + e.what());
        }
    }
    std::vector<cas::SeverityLabel> train_labels;
    const auto features = training_features(ctx.config, separate ? *separate : ctx.manifest, train_labels);
    cas::TrainResult trained;
    try {
        trained = cas::train_head(features, train_labels, {cfg.epochs, cfg.batch, cfg.lr, cfg.seed});
    } catch (const Error& e) {
        throw ConfigError(std::string("CAS training failed: ") + e.what());
    }
    table.push_back(evaluate_role(ctx, trained.head, kStreetRole, kGroundTruthRow));
    for (const auto& method : ctx.methods) table.push_back(evaluate_role(ctx, trained.head, method, method));
    return table;
}

std::vector<Tier3Summary> run_judge_tier(RunContext& ctx) {
    const auto& js = ctx.config.judge;
    judge::ClientConfig cc;
    cc.stub = js.stub;
    cc.endpoint = js.endpoint;
    cc.model = js.model;
    cc.cache_dir = js.cache_dir;
    cc.max_edge = js.max_edge;
    cc.max_in_flight = js.max_in_flight;
    cc.requests_per_second = js.requests_per_second;
    cc.apply_environment();
    std::shared_ptr<judge::Transport> transport;
    if (!cc.stub) transport = std::make_shared<judge::HttpTransport>();
    judge::JudgeClient client(cc, transport);

    std::vector<Tier3Summary> table;
    for (const auto& method : ctx.methods) {
        Tier3Summary s;
        s.method = method;
        std::vector<judge::JudgeRequest> requests;
        for (const auto& pair : ctx.manifest.pairs) {
            try {
                const auto it = pair.generated.find(method);
                if (it == pair.generated.end()) throw IoError("no generated image for method '" + method + "'");
                requests.push_back({pair.id, method, read_image(it->second), read_image(pair.street_path),
                                    js.rubric_version});
            } catch (const std::exception& e) {
                ++s.failed;
                ctx.fail("judge", method, pair.id, e.what());
            }
        }
        const auto outcomes = client.judge_many(requests);
        std::vector<judge::JudgeVerdict> ok;
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            if (!outcomes[i].verdict) {
                ++s.failed;
                ctx.fail("judge", method, requests[i].pair_id, outcomes[i].error);
                continue;
            }
            const auto& v = *outcomes[i].verdict;
            ctx.record.verdicts.push_back({requests[i].pair_id, method, v.structural, v.damage, v.realism,
                                           std::string(judge::source_name(v.source))});
            ok.push_back(v);
        }
        s.evaluated = ok.size();
        if (!ok.empty()) s.scores = judge::aggregate_verdicts(ok);
        table.push_back(std::move(s));
    }
    return table;
}

}  // namespace

RunRecord run_all(const RunConfig& config) {
    validate(config);
    dataset::Manifest manifest;
    try {
        manifest = dataset::load_manifest(config.manifest);
    } catch (const Error& e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
    std::vector<std::string> methods = config.methods.empty() ? manifest.methods : config.methods;
    const std::set<std::string> known(manifest.methods.begin(), manifest.methods.end());
    for (const auto& m : methods)
        if (!known.contains(m)) throw ConfigError("run config: method '" + m + "' is not in the manifest");

    RunRecord record;
    record.tool_version = CVE_VERSION;
    record.config = config;
    record.rubric_version = config.tiers.judge ? config.judge.rubric_version : std::string{};
    RunContext ctx{config, manifest, methods, record};

    const auto t0 = Clock::now();
    if (config.tiers.pixel) {
        const auto t = Clock::now();
        record.table1 = run_pixel_tier(ctx);
        record.timings["pixel"] = seconds_since(t);
    }
    if (config.tiers.cas) {
        const auto t = Clock::now();
        record.table2 = run_cas_tier(ctx);
        record.timings["cas"] = seconds_since(t);
    }
    if (config.tiers.judge) {
        const auto t = Clock::now();
        record.table3 = run_judge_tier(ctx);
        record.timings["judge"] = seconds_since(t);
    }
    record.timings["total"] = seconds_since(t0);
    return record;
}

// ---------------------------------------------------------------- emission

std::string format_cell(std::optional<double> value, int decimals) {
    if (!value || std::isnan(*value)) return "n/a";
    if (std::isinf(*value)) return *value > 0 ? "inf" : "-inf";
    return fixed(*value, decimals);
}

std::vector<fs::path> emit_tables(const RunRecord& record, const fs::path& out_dir) {
    if (!record.table1 && !record.table2 && !record.table3) throw DomainError("emit_tables: record has no tier data");
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    auto put = [&](const std::string& name, const std::string& text) {
        write_text_atomic(out_dir / name, text);
        written.push_back(out_dir / name);
    };
    Table counts{{"Table", "Method", "Evaluated", "Failed"}, {}};
    const std::string means_note = "Means over successfully evaluated pairs.";

    if (record.table1) {
        Table t{{"Method", "SSIM", "PSNR", "LPIPS", "FID"}, {}};
        std::vector<std::string> notes{means_note};
        for (const auto& s : *record.table1) {
            const bool any = s.evaluated > 0;
            t.rows.push_back({s.method, format_cell(any ? std::optional(s.ssim) : std::nullopt, 3),
                              format_cell(any ? std::optional(s.psnr_db) : std::nullopt, 3), format_cell(s.lpips, 3),
                              format_cell(s.fid, 2)});
            notes.push_back(count_note(s.method, s.evaluated, s.failed));
            counts.rows.push_back({"table1", s.method, std::to_string(s.evaluated), std::to_string(s.failed)});
        }
        put("table1.csv", to_csv(t));
        put("table1.md", to_markdown(t, notes));

        Table rows{{"pair_id", "method", "ssim", "psnr", "lpips"}, {}};
        for (const auto& r : record.tier1_rows)
            rows.rows.push_back({r.pair_id, r.method, format_cell(r.ssim, 6), format_cell(r.psnr_db, 6),
                                 format_cell(r.lpips, 6)});
        put("tier1_rows.csv", to_csv(rows));
    }
    if (record.table2) {
        Table t{{"Method", "Acc.", "F1", "Mild", "Mod.", "Sev."}, {}};
        std::vector<std::string> notes{"Acc. is overall accuracy, F1 is macro-F1, class columns are per-class recall."};
        for (const auto& s : *record.table2) {
            const auto& r = s.report;
            auto cell = [&](double v) { return format_cell(s.evaluated > 0 ? std::optional(v) : std::nullopt, 2); };
            t.rows.push_back({s.method, cell(r.accuracy), cell(r.macro_f1), cell(r.per_class_recall[0]),
                              cell(r.per_class_recall[1]), cell(r.per_class_recall[2])});
            notes.push_back(count_note(s.method, s.evaluated, s.failed));
            counts.rows.push_back({"table2", s.method, std::to_string(s.evaluated), std::to_string(s.failed)});
        }
        put("table2.csv", to_csv(t));
        put("table2.md", to_markdown(t, notes));
    }
    if (record.table3) {
        Table t{{"Method", "Struct.", "Damage", "Realism"}, {}};
        std::vector<std::string> notes{means_note};
        for (const auto& s : *record.table3) {
            auto cell = [&](double v) { return format_cell(s.evaluated > 0 ? std::optional(v) : std::nullopt, 2); };
            t.rows.push_back({s.method, cell(s.scores.structural), cell(s.scores.damage), cell(s.scores.realism)});
            notes.push_back(count_note(s.method, s.evaluated, s.failed));
            counts.rows.push_back({"table3", s.method, std::to_string(s.evaluated), std::to_string(s.failed)});
        }
        put("table3.csv", to_csv(t));
        put("table3.md", to_markdown(t, notes));

        Table v{{"pair_id", "method", "structural", "damage", "realism", "source"}, {}};
        for (const auto& r : record.verdicts)
            v.rows.push_back({r.pair_id, r.method, std::to_string(r.structural), std::to_string(r.damage),
                              std::to_string(r.realism), r.source});
        put("judge_verdicts.csv", to_csv(v));
    }
    put("counts.csv", to_csv(counts));
    return written;
}

std::string confusion_svg(const std::string& title, const cas::ConfusionMatrix& matrix) {
    constexpr int cell = 80, left = 110, top = 70;
    constexpr int n = static_cast<int>(cas::kNumClasses);
    constexpr int width = left + n * cell + 20, height = top + n * cell + 50;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(title)
       << "</text>\n";
    os << "<text x=\"" << left + n * cell / 2 << "\" y=\"" << top - 28
       << "\" text-anchor=\"middle\" font-size=\"12\">Predicted</text>\n";
    os << "<text x=\"18\" y=\"" << top + n * cell / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 18 "
       << top + n * cell / 2 << ")\">True</text>\n";
    for (int i = 0; i < n; ++i) {
        const auto name = std::string(dataset::label_name(dataset::label_from_index(i)));
        os << "<text x=\"" << left + i * cell + cell / 2 << "\" y=\"" << top - 8
           << "\" text-anchor=\"middle\" font-size=\"12\">" << name << "</text>\n";
        os << "<text x=\"" << left - 8 << "\" y=\"" << top + i * cell + cell / 2 + 4
           << "\" text-anchor=\"end\" font-size=\"12\">" << name << "</text>\n";
    }
    for (int t = 0; t < n; ++t) {
        const auto total = matrix.row_total(static_cast<std::size_t>(t));
        for (int p = 0; p < n; ++p) {
            const double v = total == 0 ? 0.0
                                        : static_cast<double>(matrix.counts[t][p]) / static_cast<double>(total);
            // White to dark blue.
            const auto channel = [&](int lo, int hi) { return static_cast<int>(std::lround(hi + v * (lo - hi))); };
            char fill[8];
            std::snprintf(fill, sizeof fill, "#%02x%02x%02x", channel(8, 255), channel(48, 255), channel(107, 255));
            const int x = left + p * cell, y = top + t * cell;
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
               << "\" fill=\"" << fill << "\" stroke=\"#666666\" stroke-width=\"1\"/>\n";
            os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 5
               << "\" text-anchor=\"middle\" font-size=\"14\" fill=\"" << (v > 0.5 ? "#ffffff" : "#000000") << "\">"
               << fixed(v, 2) << "</text>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

std::vector<fs::path> emit_confusion_figures(const RunRecord& record, const fs::path& out_dir) {
    if (!record.table2) throw DomainError("emit_confusion_figures: record has no CAS tier");
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    for (const auto& s : *record.table2) {
        const auto stem = "confusion_" + file_stem_for(s.method);
        std::ostringstream csv;
        csv << "true\\predicted";
        for (auto l : dataset::kAllLabels) csv << ',' << dataset::label_name(l);
        csv << '\n';
        for (std::size_t t = 0; t < cas::kNumClasses; ++t) {
            csv << dataset::label_name(dataset::label_from_index(static_cast<int>(t)));
            for (std::size_t p = 0; p < cas::kNumClasses; ++p) csv << ',' << s.report.matrix.counts[t][p];
            csv << '\n';
        }
        write_text_atomic(out_dir / (stem + ".csv"), csv.str());
        write_text_atomic(out_dir / (stem + ".svg"), confusion_svg(s.method, s.report.matrix));
        written.push_back(out_dir / (stem + ".csv"));
        written.push_back(out_dir / (stem + ".svg"));
    }
    return written;
}

int run_and_emit(const RunConfig& config) {
    const auto record = run_all(config);
    write_record(config.output_dir / "record.json", record);
    emit_tables(record, config.output_dir);
    if (record.table2) emit_confusion_figures(record, config.output_dir);
    return record.errors.empty() ? 0 : 2;
}

}  // namespace cve::report
