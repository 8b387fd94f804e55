#pragma once

// VLM-as-a-judge: rubric prompts comparing a generated street view with its
// ground truth, a retrying provider client with a content-addressed cache,
// Likert verdict parsing and per-method aggregation. Also hosts the
// satellite damage-description call used for prompt conditioning.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

#include "cve/dataset.hpp"
#include "cve/image.hpp"
#include "cve/transport.hpp"

namespace cve::judge {

inline constexpr const char* kDefaultRubric = "v1";

/// Rubric text for a shipped version; throws DomainError when unknown.
const std::string& rubric_text(const std::string& version);
std::vector<std::string> rubric_versions();

struct JudgeRequest {
    std::string pair_id;
    std::string method;
    ImagePlane generated_image;
    ImagePlane reference_image;
    std::string rubric_version = kDefaultRubric;
};

/// Fully rendered provider call plus the content key it is cached under.
struct ProviderRequest {
    std::string prompt;
    std::string body;       // JSON, byte-stable
    std::string cache_key;  // hex SHA-256
};

enum class VerdictSource { Live, Cache, Stub };
std::string_view source_name(VerdictSource s);

struct JudgeVerdict {
    int structural = 0;
    int damage = 0;
    int realism = 0;
    VerdictSource source = VerdictSource::Live;
    std::string raw_response;
    int attempts = 0;

    bool same_scores(const JudgeVerdict& o) const {
        return structural == o.structural && damage == o.damage && realism == o.realism;
    }
};

class VerdictParseError : public Error {
public:
    enum class Kind { Unparseable, MissingField, OutOfRange, NonInteger };
    VerdictParseError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Strict JSON object {"structural","damage","realism"} first (a fenced code
/// block is accepted); otherwise labelled integers in prose. Scores outside
/// 1..5 and fractional scores are errors.
JudgeVerdict parse_verdict(const std::string& raw);
std::string serialize_verdict(const JudgeVerdict& v);

struct DamagePrompt {
    std::string pair_id;
    std::string text;
    std::optional<std::vector<double>> embedding;
    VerdictSource source = VerdictSource::Live;
};

inline constexpr std::size_t kPromptEmbeddingDim = 64;

/// Bag-of-tokens hashing: lower-cased alphanumeric tokens, FNV-1a 64 mod dim
/// picks the slot, the top hash bit picks the sign; L2-normalized.
std::vector<double> hash_embedding(const std::string& text, std::size_t dim = kPromptEmbeddingDim);

class AuthError : public Error {
public:
    using Error::Error;
};
class ProviderError : public Error {
public:
    using Error::Error;
};
class RetriesExhausted : public Error {
public:
    RetriesExhausted(const std::string& message, int attempts) : Error(message), attempts_(attempts) {}
    int attempts() const { return attempts_; }

private:
    int attempts_;
};

struct ClientConfig {
    std::string endpoint;  // full URL of an OpenAI-compatible chat-completions endpoint
    std::string model = "gemini-2.5-flash";
    std::string api_key;
    bool stub = false;
    std::filesystem::path cache_dir;  // empty disables caching
    std::size_t max_edge = 512;
    int max_attempts = 5;
    std::chrono::milliseconds backoff_base{1000};
    double backoff_factor = 2.0;
    std::size_t max_in_flight = 4;
    double requests_per_second = 4.0;
    /// Injected for tests; defaults to std::this_thread::sleep_for.
    std::function<void(std::chrono::milliseconds)> sleeper;

    /// Fills endpoint and api_key from CVE_API_URL / CVE_API_KEY when unset.
    void apply_environment();
};

/// Builds the deterministic provider request. Images are downscaled to
/// max_edge and sent as PNG data URIs.
ProviderRequest build_judge_prompt(const JudgeRequest& req, const ClientConfig& config);

/// Payload text of a chat-completions (choices[0].message.content) or
/// generateContent (candidates[0].content.parts[].text) response.
std::optional<std::string> extract_response_text(const std::string& body);

/// Content-addressed store of JSON records, <dir>/<key[0:2]>/<key>.json,
/// written via temp-file-and-rename.
class ContentCache {
public:
    explicit ContentCache(std::filesystem::path dir) : dir_(std::move(dir)) {}
    std::optional<nlohmann::json> get(const std::string& key) const;
    void put(const std::string& key, const nlohmann::json& record) const;
    std::filesystem::path path_for(const std::string& key) const;

private:
    std::filesystem::path dir_;
};

struct JudgeOutcome {
    std::optional<JudgeVerdict> verdict;
    std::string error;
};

class JudgeClient {
public:
    JudgeClient(ClientConfig config, std::shared_ptr<Transport> transport);
    ~JudgeClient();
    JudgeClient(const JudgeClient&) = delete;
    JudgeClient& operator=(const JudgeClient&) = delete;

    JudgeVerdict judge_pair(const JudgeRequest& req);
    /// Evaluates requests with at most max_in_flight concurrent calls; results
    /// are returned in input order.
    std::vector<JudgeOutcome> judge_many(const std::vector<JudgeRequest>& requests);

    /// severity_hint only steers the stub's canned description.
    DamagePrompt extract_damage_prompt(const ImagePlane& satellite, const std::string& pair_id,
                                       std::optional<dataset::SeverityLabel> severity_hint = std::nullopt);

    std::uint64_t live_calls() const { return live_calls_.load(); }
    const ClientConfig& config() const { return config_; }

private:
    /// Sends `body` with retries; `accept` validates the payload text and
    /// throws VerdictParseError to trigger a retry.
    std::string call_with_retries(const std::string& body, const std::string& key,
                                  const std::function<void(const std::string&)>& accept, int& attempts);
    void sleep_for(std::chrono::milliseconds d) const;

    ClientConfig config_;
    std::shared_ptr<Transport> transport_;
    std::optional<ContentCache> cache_;
    TokenBucket bucket_;
    std::unique_ptr<std::counting_semaphore<>> in_flight_;
    std::atomic<std::uint64_t> live_calls_{0};
};

struct MeanScores {
    double structural = 0.0;
    double damage = 0.0;
    double realism = 0.0;
    std::size_t count = 0;
    bool operator==(const MeanScores&) const = default;
};

/// Arithmetic means per criterion; throws DomainError on an empty group.
MeanScores aggregate_verdicts(const std::vector<JudgeVerdict>& verdicts);

}  // namespace cve::judge
