#include "cve/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <regex>
#include <thread>

#include "cve/hash.hpp"

namespace cve::judge {

namespace detail {
const std::map<std::string, std::string>& rubric_table();
}

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kDamagePromptVersion = "damage-v1";

constexpr const char* kReplyInstruction =
    "\n\nImage 1: generated street view. Image 2: ground-truth street view.\n"
    "Reply with only a JSON object of the form "
    "{\"structural\": <1-5>, \"damage\": <1-5>, \"realism\": <1-5>} and no other text.";

constexpr const char* kDamageInstruction =
    "You are an expert in post-disaster damage assessment. Describe the hurricane damage visible in this "
    "satellite image in one or two sentences suitable as a text prompt for generating the matching street-level "
    "view. State the overall severity as one of: mild, moderate, severe. Mention roofs, walls, debris, vegetation "
    "and flooding where visible.";

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string png_data_uri(const ImagePlane& img, std::size_t max_edge, std::string& digest_hex) {
    const auto png = encode_png(downscale_to_edge(img, max_edge));
    digest_hex = to_hex(sha256(png));
    return "data:image/png;base64," + base64_encode(png);
}

json chat_body(const std::string& model, const std::string& prompt, const std::vector<std::string>& image_uris) {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    for (const auto& uri : image_uris) content.push_back({{"type", "image_url"}, {"image_url", {{"url", uri}}}});
    return {{"model", model},
            {"temperature", 0},
            {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})}};
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Contents of the first ``` fenced block, or the trimmed input.
std::string strip_fence(const std::string& raw) {
    const std::string t = trim(raw);
    if (t.rfind("```", 0) != 0) return t;
    const auto first_nl = t.find('\n');
    const auto close = t.rfind("```");
    if (first_nl == std::string::npos || close <= first_nl) return t;
    return trim(t.substr(first_nl + 1, close - first_nl - 1));
}

using Kind = VerdictParseError::Kind;

int check_score(double value, bool integral, const char* field) {
    if (!integral || std::floor(value) != value)
        throw VerdictParseError(Kind::NonInteger, std::string("score '") + field + "' is not a whole number");
    if (value < 1 || value > 5)
        throw VerdictParseError(Kind::OutOfRange,
                                std::string("score '") + field + "' = " + std::to_string(static_cast<long long>(value)) +
                                    " outside 1..5");
    return static_cast<int>(value);
}

constexpr const char* kFields[3] = {"structural", "damage", "realism"};

std::optional<JudgeVerdict> parse_strict(const std::string& raw) {
    const std::string body = strip_fence(raw);
    if (body.empty() || body.front() != '{') return std::nullopt;
    json doc = json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
    int scores[3] = {};
    for (int i = 0; i < 3; ++i) {
        if (!doc.contains(kFields[i]))
            throw VerdictParseError(Kind::MissingField, std::string("missing field '") + kFields[i] + "'");
        const auto& v = doc[kFields[i]];
        if (v.is_number_integer() || v.is_number_unsigned()) {
            scores[i] = check_score(v.get<double>(), true, kFields[i]);
        } else if (v.is_number_float()) {
            scores[i] = check_score(v.get<double>(), false, kFields[i]);
        } else {
            throw VerdictParseError(Kind::Unparseable, std::string("field '") + kFields[i] + "' is not a number");
        }
    }
    JudgeVerdict out;
    out.structural = scores[0];
    out.damage = scores[1];
    out.realism = scores[2];
    return out;
}

JudgeVerdict parse_lenient(const std::string& raw) {
    static const std::regex patterns[3] = {
        std::regex(R"((?:structur\w*)[^\d\n]{0,40}?(-?\d+(?:\.\d+)?))", std::regex::icase),
        std::regex(R"((?:damage\w*)[^\d\n]{0,40}?(-?\d+(?:\.\d+)?))", std::regex::icase),
        std::regex(R"((?:realis\w*)[^\d\n]{0,40}?(-?\d+(?:\.\d+)?))", std::regex::icase),
    };
    std::optional<std::string> found[3];
    int hits = 0;
    for (int i = 0; i < 3; ++i) {
        std::smatch m;
        if (std::regex_search(raw, m, patterns[i])) {
            found[i] = m[1].str();
            ++hits;
        }
    }
    if (hits == 0) throw VerdictParseError(Kind::Unparseable, "no labelled scores found in response");
    for (int i = 0; i < 3; ++i)
        if (!found[i]) throw VerdictParseError(Kind::MissingField, std::string("missing score for '") + kFields[i] + "'");
    int scores[3] = {};
    for (int i = 0; i < 3; ++i) {
        const bool integral = found[i]->find('.') == std::string::npos;
        scores[i] = check_score(std::stod(*found[i]), integral, kFields[i]);
    }
    JudgeVerdict out;
    out.structural = scores[0];
    out.damage = scores[1];
    out.realism = scores[2];
    return out;
}

int stub_score(const std::string& key_hex, int criterion) {
    const auto word = std::stoull(key_hex.substr(static_cast<std::size_t>(criterion) * 16, 16), nullptr, 16);
    return static_cast<int>(word % 5) + 1;
}

std::string_view stub_description(dataset::SeverityLabel l) {
    switch (l) {
        case dataset::SeverityLabel::Mild:
            return "Post-hurricane satellite view with mild damage: roofs largely intact, scattered small debris, "
                   "trees standing.";
        case dataset::SeverityLabel::Moderate:
            return "Post-hurricane satellite view with moderate damage: partial roof loss, debris piles along the "
                   "street, several downed trees.";
        case dataset::SeverityLabel::Severe:
            return "Post-hurricane satellite view with severe damage: collapsed roofs and walls, extensive debris "
                   "fields, structures destroyed.";
    }
    return "";
}

}  // namespace

const std::string& rubric_text(const std::string& version) {
    const auto& table = detail::rubric_table();
    const auto it = table.find(version);
    if (it == table.end()) throw DomainError("unknown rubric version '" + version + "'");
    return it->second;
}

std::vector<std::string> rubric_versions() {
    std::vector<std::string> out;
    for (const auto& [k, v] : detail::rubric_table()) out.push_back(k);
    return out;
}

std::string_view source_name(VerdictSource s) {
    switch (s) {
        case VerdictSource::Live: return "live";
        case VerdictSource::Cache: return "cache";
        case VerdictSource::Stub: return "stub";
    }
    return "live";
}

JudgeVerdict parse_verdict(const std::string& raw) {
    JudgeVerdict v;
    try {
        if (auto strict = parse_strict(raw)) v = *strict;
        else v = parse_lenient(raw);
    } catch (const VerdictParseError& e) {
        // A JSON reply with renamed keys may still carry labelled scores.
        if (e.kind() != Kind::MissingField) throw;
        v = parse_lenient(raw);
    }
    v.raw_response = raw;
    return v;
}

std::string serialize_verdict(const JudgeVerdict& v) {
    return json{{"structural", v.structural}, {"damage", v.damage}, {"realism", v.realism}}.dump();
}

std::vector<double> hash_embedding(const std::string& text, std::size_t dim) {
    if (dim == 0) throw DomainError("hash_embedding: dim must be positive");
    std::vector<double> out(dim, 0.0);
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        const auto h = fnv1a64(token);
        out[h % dim] += (h >> 63) ? -1.0 : 1.0;
        token.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c)) token.push_back(static_cast<char>(std::tolower(c)));
        else flush();
    }
    flush();
    double norm = 0.0;
    for (double v : out) norm += v * v;
    if (norm > 0.0)
        for (double& v : out) v /= std::sqrt(norm);
    return out;
}

void ClientConfig::apply_environment() {
    if (endpoint.empty())
        if (const char* url = std::getenv("CVE_API_URL")) endpoint = url;
    if (api_key.empty())
        if (const char* key = std::getenv("CVE_API_KEY")) api_key = key;
}

ProviderRequest build_judge_prompt(const JudgeRequest& req, const ClientConfig& config) {
    if (req.generated_image.empty() || req.reference_image.empty())
        throw DomainError("build_judge_prompt: pair '" + req.pair_id + "' has an empty image payload");
    ProviderRequest out;
    out.prompt = rubric_text(req.rubric_version) + kReplyInstruction;
    std::string gen_digest, ref_digest;
    const auto gen_uri = png_data_uri(req.generated_image, config.max_edge, gen_digest);
    const auto ref_uri = png_data_uri(req.reference_image, config.max_edge, ref_digest);
    out.body = chat_body(config.model, out.prompt, {gen_uri, ref_uri}).dump();
    out.cache_key = to_hex(Sha256()
                               .field("judge")
                               .field(config.model)
                               .field(req.rubric_version)
                               .field(gen_digest)
                               .field(ref_digest)
                               .finish());
    return out;
}

std::optional<std::string> extract_response_text(const std::string& body) {
    const json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
    try {
        if (doc.contains("choices")) {
            const auto& content = doc.at("choices").at(0).at("message").at("content");
            if (content.is_string()) return content.get<std::string>();
            return std::nullopt;
        }
        if (doc.contains("candidates")) {
            std::string text;
            for (const auto& part : doc.at("candidates").at(0).at("content").at("parts"))
                if (part.contains("text")) text += part.at("text").get<std::string>();
            return text;
        }
    } catch (const json::exception&) {
        return std::nullopt;
    }
    return std::nullopt;
}

fs::path ContentCache::path_for(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<json> ContentCache::get(const std::string& key) const {
    std::ifstream in(path_for(key));
    if (!in) return std::nullopt;
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) return std::nullopt;
    return doc;
}

void ContentCache::put(const std::string& key, const json& record) const {
    const auto target = path_for(key);
    fs::create_directories(target.parent_path());
    auto tmp = target;
    tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cache: cannot write " + tmp.string());
        out << record.dump(2) << '\n';
        if (!out) throw IoError("cache: short write " + tmp.string());
    }
    fs::rename(tmp, target);
}

JudgeClient::JudgeClient(ClientConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      bucket_(config_.requests_per_second, static_cast<double>(std::max<std::size_t>(1, config_.max_in_flight))),
      in_flight_(std::make_unique<std::counting_semaphore<>>(
          static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, config_.max_in_flight)))) {
    if (!config_.cache_dir.empty()) cache_.emplace(config_.cache_dir);
    if (!config_.stub && !transport_) throw DomainError("JudgeClient: live mode needs a transport");
    if (config_.max_attempts < 1) throw DomainError("JudgeClient: max_attempts must be >= 1");
}

JudgeClient::~JudgeClient() = default;

void JudgeClient::sleep_for(std::chrono::milliseconds d) const {
    if (config_.sleeper) config_.sleeper(d);
    else std::this_thread::sleep_for(d);
}

std::string JudgeClient::call_with_retries(const std::string& body, const std::string& key,
                                           const std::function<void(const std::string&)>& accept, int& attempts) {
    if (config_.endpoint.empty()) throw DomainError("judge: no provider endpoint configured (set CVE_API_URL)");
    HttpRequest request{config_.endpoint, {{"Content-Type", "application/json"}}, body};
    if (!config_.api_key.empty()) request.headers.emplace_back("Authorization", "Bearer " + config_.api_key);

    Rng jitter(std::stoull(key.substr(0, 16), nullptr, 16));
    std::string last_error = "no attempt made";
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        attempts = attempt;
        std::optional<double> retry_after;
        std::optional<HttpResponse> response;
        {
            in_flight_->acquire();
            struct Release {
                std::counting_semaphore<>& s;
                ~Release() { s.release(); }
            } release{*in_flight_};
            bucket_.acquire();
            ++live_calls_;
            try {
                response = transport_->post(request);
            } catch (const TransportError& e) {
                last_error = e.what();
            }
        }
        if (response) {
            const int status = response->status;
            if (status == 401 || status == 403)
                throw AuthError("provider rejected credentials (HTTP " + std::to_string(status) + ")");
            if (status == 429) {
                retry_after = response->retry_after;
                last_error = "rate limited (HTTP 429)";
            } else if (status >= 500) {
                last_error = "provider error (HTTP " + std::to_string(status) + ")";
            } else if (status >= 400 || status < 200) {
                throw ProviderError("provider returned HTTP " + std::to_string(status) + ": " +
                                    response->body.substr(0, 200));
            } else if (const auto text = extract_response_text(response->body)) {
                try {
                    accept(*text);
                    return *text;
                } catch (const VerdictParseError& e) {
                    last_error = std::string("unusable reply: ") + e.what();
                }
            } else {
                last_error = "response body is not a recognised completion envelope";
            }
        }
        if (attempt == config_.max_attempts) break;
        const double scale = std::pow(config_.backoff_factor, attempt - 1) * (0.5 + 0.5 * jitter.uniform());
        auto delay = std::chrono::milliseconds(static_cast<long long>(config_.backoff_base.count() * scale));
        if (retry_after)
            delay = std::max(delay, std::chrono::milliseconds(static_cast<long long>(*retry_after * 1000.0)));
        sleep_for(delay);
    }
    throw RetriesExhausted("judge: giving up after " + std::to_string(attempts) + " attempts: " + last_error, attempts);
}

JudgeVerdict JudgeClient::judge_pair(const JudgeRequest& req) {
    const auto prepared = build_judge_prompt(req, config_);
    if (config_.stub) {
        JudgeVerdict v;
        v.structural = stub_score(prepared.cache_key, 0);
        v.damage = stub_score(prepared.cache_key, 1);
        v.realism = stub_score(prepared.cache_key, 2);
        v.source = VerdictSource::Stub;
        v.raw_response = serialize_verdict(v);
        return v;
    }
    if (cache_) {
        if (const auto record = cache_->get(prepared.cache_key); record && record->contains("verdict")) {
            try {
                JudgeVerdict v = parse_verdict(record->at("verdict").dump());
                v.raw_response = record->value("raw_response", v.raw_response);
                v.attempts = 0;
                v.source = VerdictSource::Cache;
                return v;
            } catch (const Error&) {
                // Corrupt record: fall through to a live call, which overwrites it.
            }
        }
    }
    int attempts = 0;
    JudgeVerdict parsed;
    const auto text = call_with_retries(prepared.body, prepared.cache_key,
                                        [&](const std::string& t) { parsed = parse_verdict(t); }, attempts);
    parsed.raw_response = text;
    parsed.attempts = attempts;
    parsed.source = VerdictSource::Live;
    if (cache_) {
        cache_->put(prepared.cache_key, {{"kind", "judge_verdict"},
                                         {"key", prepared.cache_key},
                                         {"request_digest", to_hex(sha256(prepared.body))},
                                         {"rubric_version", req.rubric_version},
                                         {"model", config_.model},
                                         {"pair_id", req.pair_id},
                                         {"method", req.method},
                                         {"verdict", json::parse(serialize_verdict(parsed))},
                                         {"raw_response", text},
                                         {"attempts", attempts},
                                         {"created_at", utc_timestamp()}});
    }
    return parsed;
}

std::vector<JudgeOutcome> JudgeClient::judge_many(const std::vector<JudgeRequest>& requests) {
    std::vector<JudgeOutcome> out(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < requests.size(); i = next++) {
            try {
                out[i].verdict = judge_pair(requests[i]);
            } catch (const std::exception& e) {
                out[i].error = e.what();
            }
        }
    };
    const std::size_t workers = std::min(requests.size(), std::max<std::size_t>(1, config_.max_in_flight));
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    pool.clear();
    return out;
}

DamagePrompt JudgeClient::extract_damage_prompt(const ImagePlane& satellite, const std::string& pair_id,
                                                std::optional<dataset::SeverityLabel> severity_hint) {
    if (satellite.empty()) throw DomainError("extract_damage_prompt: empty satellite image");
    std::string digest;
    const auto uri = png_data_uri(satellite, config_.max_edge, digest);
    const std::string key =
        to_hex(Sha256().field("damage_prompt").field(config_.model).field(kDamagePromptVersion).field(digest).finish());

    DamagePrompt out;
    out.pair_id = pair_id;
    if (config_.stub) {
        const auto label = severity_hint ? *severity_hint
                                         : dataset::label_from_index(static_cast<int>(
                                               std::stoull(key.substr(0, 16), nullptr, 16) % dataset::kNumClasses));
        out.text = std::string(stub_description(label));
        out.source = VerdictSource::Stub;
    } else {
        std::optional<std::string> cached;
        if (cache_)
            if (const auto record = cache_->get(key); record && record->contains("text"))
                cached = record->at("text").get<std::string>();
        if (cached) {
            out.text = *cached;
            out.source = VerdictSource::Cache;
        } else {
            int attempts = 0;
            const auto body = chat_body(config_.model, kDamageInstruction, {uri}).dump();
            out.text = trim(call_with_retries(
                body, key,
                [](const std::string& t) {
                    if (trim(t).empty()) throw VerdictParseError(Kind::Unparseable, "empty damage description");
                },
                attempts));
            out.source = VerdictSource::Live;
            if (cache_)
                cache_->put(key, {{"kind", "damage_prompt"},
                                  {"key", key},
                                  {"prompt_version", kDamagePromptVersion},
                                  {"model", config_.model},
                                  {"pair_id", pair_id},
                                  {"text", out.text},
                                  {"attempts", attempts},
                                  {"created_at", utc_timestamp()}});
        }
    }
    out.embedding = hash_embedding(out.text);
    return out;
}

MeanScores aggregate_verdicts(const std::vector<JudgeVerdict>& verdicts) {
    if (verdicts.empty()) throw DomainError("aggregate_verdicts: empty group");
    long long s = 0, d = 0, r = 0;
    for (const auto& v : verdicts) {
        s += v.structural;
        d += v.damage;
        r += v.realism;
    }
    const auto n = static_cast<double>(verdicts.size());
    return {static_cast<double>(s) / n, static_cast<double>(d) / n, static_cast<double>(r) / n, verdicts.size()};
}

}  // namespace cve::judge
