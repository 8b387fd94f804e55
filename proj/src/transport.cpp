#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <thread>

#include "cve/transport.hpp"

namespace cve::judge {

HttpResponse HttpTransport::post(const HttpRequest& request) {
    // Split "scheme://host[:port]/path" into the client base and the path.
    const auto scheme_end = request.url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("invalid provider URL: " + request.url);
    const auto path_start = request.url.find('/', scheme_end + 3);
    const std::string base = request.url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : request.url.substr(path_start);

    httplib::Client client(base);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
        if (k == "Content-Type") content_type = v;
        else headers.emplace(k, v);
    }
    auto result = client.Post(path, headers, request.body, content_type);
    if (!result) throw TransportError("request to " + base + " failed: " + httplib::to_string(result.error()));

    HttpResponse response{result->status, result->body, std::nullopt};
    if (result->has_header("Retry-After")) {
        try {
            response.retry_after = std::stod(result->get_header_value("Retry-After"));
        } catch (const std::exception&) {
            // HTTP-date form is not interpreted; fall back to the backoff schedule.
        }
    }
    return response;
}

TokenBucket::TokenBucket(double rate, double burst)
    : rate_(rate), burst_(std::max(1.0, burst)), tokens_(std::max(1.0, burst)), last_(Clock::now()) {}

void TokenBucket::acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock lock(mu_);
    for (;;) {
        const auto now = Clock::now();
        const double elapsed = std::chrono::duration<double>(now - last_).count();
        tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
        last_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        const double wait = (1.0 - tokens_) / rate_;
        lock.unlock();
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
        lock.lock();
    }
}

}  // namespace cve::judge
