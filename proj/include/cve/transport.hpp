#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cve/common.hpp"

namespace cve::judge {

struct HttpRequest {
    std::string url;
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
};

struct HttpResponse {
    int status = 0;
    std::string body;
    /// Parsed Retry-After header, in seconds.
    std::optional<double> retry_after;
};

/// Raised when no HTTP response was obtained at all (DNS, connect, timeout).
class TransportError : public Error {
public:
    using Error::Error;
};

/// A single blocking POST. Implementations must be thread-safe.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// cpp-httplib backed transport; http:// and https:// URLs.
class HttpTransport final : public Transport {
public:
    explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120)) : timeout_(timeout) {}
    HttpResponse post(const HttpRequest& request) override;

private:
    std::chrono::seconds timeout_;
};

/// Token bucket: `rate` tokens per second, at most `burst` stored. A rate of
/// zero disables limiting.
class TokenBucket {
public:
    using Clock = std::chrono::steady_clock;

    TokenBucket(double rate, double burst);
    /// Blocks until a token is available.
    void acquire();

private:
    std::mutex mu_;
    double rate_;
    double burst_;
    double tokens_;
    Clock::time_point last_;
};

}  // namespace cve::judge
