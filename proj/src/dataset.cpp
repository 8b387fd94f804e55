#include "cve/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <json.hpp>

namespace cve::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

SeverityLabel label_from_index(int index) {
    if (index < 0 || index >= static_cast<int>(kNumClasses))
        throw DomainError("severity index out of range: " + std::to_string(index));
    return static_cast<SeverityLabel>(index);
}

std::string_view label_name(SeverityLabel l) {
    switch (l) {
        case SeverityLabel::Mild: return "mild";
        case SeverityLabel::Moderate: return "moderate";
        case SeverityLabel::Severe: return "severe";
    }
    return "mild";
}

std::optional<SeverityLabel> parse_label(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (auto l : kAllLabels)
        if (lower == label_name(l)) return l;
    return std::nullopt;
}

std::size_t Manifest::count(SeverityLabel l) const {
    return static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(), [l](const SamplePair& p) { return p.label == l; }));
}

std::vector<SeverityLabel> Manifest::labels() const {
    std::vector<SeverityLabel> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.label);
    return out;
}

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
    throw ManifestError(ManifestError::Kind::Schema, "manifest schema violation at " + where + ": " + what);
}

std::string require_string(const json& obj, const char* field, const std::string& where) {
    if (!obj.contains(field)) schema_error(where, std::string("missing field '") + field + "'");
    if (!obj[field].is_string()) schema_error(where, std::string("field '") + field + "' must be a string");
    return obj[field].get<std::string>();
}

fs::path resolve_existing(const fs::path& base, const std::string& rel, const std::string& pair_id,
                          const std::string& field) {
    const fs::path p = fs::absolute(base / rel).lexically_normal();
    if (!fs::exists(p))
        throw ManifestError(ManifestError::Kind::DanglingPath,
                            "pair '" + pair_id + "' field '" + field + "' references missing file " + p.string());
    return p;
}

std::string relative_to(const fs::path& target, const fs::path& base) {
    return fs::absolute(target).lexically_normal().lexically_relative(base.lexically_normal()).generic_string();
}

}  // namespace

Manifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError(ManifestError::Kind::MissingFile, "manifest not found: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ManifestError(ManifestError::Kind::Schema, std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) schema_error("root", "expected an object");
    const fs::path base = fs::absolute(path).parent_path();

    Manifest m;
    if (doc.contains("split")) {
        if (!doc["split"].is_string()) schema_error("root", "field 'split' must be a string");
        const auto s = doc["split"].get<std::string>();
        if (s == "train") m.split = Split::Train;
        else if (s == "test") m.split = Split::Test;
        else schema_error("root", "field 'split' must be \"train\" or \"test\"");
    }
    if (!doc.contains("methods") || !doc["methods"].is_array()) schema_error("root", "field 'methods' must be an array");
    for (const auto& v : doc["methods"]) {
        if (!v.is_string()) schema_error("methods", "entries must be strings");
        m.methods.push_back(v.get<std::string>());
    }
    if (!doc.contains("pairs") || !doc["pairs"].is_array()) schema_error("root", "field 'pairs' must be an array");
    const std::set<std::string> methods(m.methods.begin(), m.methods.end());
    std::set<std::string> ids;
    std::size_t index = 0;
    for (const auto& entry : doc["pairs"]) {
        const std::string where = "pairs[" + std::to_string(index++) + "]";
        if (!entry.is_object()) schema_error(where, "expected an object");
        SamplePair p;
        p.id = require_string(entry, "id", where);
        const std::string pwhere = "pair '" + p.id + "'";
        if (p.id.empty()) schema_error(where, "field 'id' must be non-empty");
        if (!ids.insert(p.id).second)
            throw ManifestError(ManifestError::Kind::DuplicateId, "duplicate pair id '" + p.id + "'");
        const auto label_text = require_string(entry, "label", pwhere);
        const auto label = parse_label(label_text);
        if (!label) schema_error(pwhere, "field 'label' must be mild, moderate or severe, got '" + label_text + "'");
        p.label = *label;
        p.satellite_path = resolve_existing(base, require_string(entry, "satellite", pwhere), p.id, "satellite");
        p.street_path = resolve_existing(base, require_string(entry, "street", pwhere), p.id, "street");
        if (entry.contains("generated")) {
            if (!entry["generated"].is_object()) schema_error(pwhere, "field 'generated' must be an object");
            for (const auto& [method, rel] : entry["generated"].items()) {
                if (!methods.contains(method))
                    schema_error(pwhere, "generated method '" + method + "' is not listed in 'methods'");
                if (!rel.is_string()) schema_error(pwhere, "generated['" + method + "'] must be a string");
                p.generated[method] = resolve_existing(base, rel.get<std::string>(), p.id, "generated." + method);
            }
        }
        m.pairs.push_back(std::move(p));
    }
    return m;
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
    const fs::path base = fs::absolute(path).lexically_normal().parent_path();
    json doc;
    doc["split"] = manifest.split == Split::Train ? "train" : "test";
    doc["methods"] = manifest.methods;
    doc["pairs"] = json::array();
    for (const auto& p : manifest.pairs) {
        json entry;
        entry["id"] = p.id;
        entry["satellite"] = relative_to(p.satellite_path, base);
        entry["street"] = relative_to(p.street_path, base);
        entry["label"] = std::string(label_name(p.label));
        entry["generated"] = json::object();
        for (const auto& [method, gp] : p.generated) entry["generated"][method] = relative_to(gp, base);
        doc["pairs"].push_back(std::move(entry));
    }
    if (!base.empty()) fs::create_directories(base);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("short write: " + path.string());
}

std::pair<Manifest, Manifest> stratified_split(const Manifest& manifest, std::size_t per_class,
                                               std::uint64_t seed) {
    for (auto l : kAllLabels) {
        const auto have = manifest.count(l);
        if (have < per_class)
            throw InsufficientClassError("class '" + std::string(label_name(l)) + "' has " + std::to_string(have) +
                                         " pairs, " + std::to_string(per_class) + " requested");
    }
    Rng rng(seed);
    std::vector<bool> chosen(manifest.pairs.size(), false);
    for (auto l : kAllLabels) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < manifest.pairs.size(); ++i)
            if (manifest.pairs[i].label == l) members.push_back(i);
        rng.shuffle(members);
        for (std::size_t k = 0; k < per_class; ++k) chosen[members[k]] = true;
    }
    Manifest test{{}, Split::Test, manifest.methods};
    Manifest train{{}, Split::Train, manifest.methods};
    for (std::size_t i = 0; i < manifest.pairs.size(); ++i)
        (chosen[i] ? test : train).pairs.push_back(manifest.pairs[i]);
    return {std::move(test), std::move(train)};
}

}  // namespace cve::dataset
