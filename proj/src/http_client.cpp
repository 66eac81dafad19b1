#include "http_client.hpp"

#include <chrono>
#include <thread>

#include "adapcr/error.hpp"
#include "httplib.h"

namespace adapcr::detail {

nlohmann::json post_json(std::string_view endpoint, std::string_view path, const nlohmann::json& body,
                         const RetryPolicy& policy) {
    httplib::Client client{std::string(endpoint)};
    if (!client.is_valid()) throw ConfigError("invalid endpoint: " + std::string(endpoint));
    client.set_connection_timeout(2, 0);
    client.set_read_timeout(30, 0);

    const std::string payload = body.dump();
    std::string last_error = "no attempt made";
    int delay_ms = policy.backoff_ms;
    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        auto res = client.Post(std::string(path), payload, "application/json");
        if (res && res->status < 500) {
            if (res->status >= 400) {
                throw ContractError("remote " + std::string(path) + " returned HTTP " + std::to_string(res->status));
            }
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::parse_error& e) {
                throw ContractError("remote " + std::string(path) + " returned malformed JSON: " + e.what());
            }
        }
        last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
        if (attempt < policy.max_attempts) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            delay_ms *= 2;
        }
    }
    throw TransportError(std::string(endpoint) + std::string(path) + " failed after " +
                             std::to_string(policy.max_attempts) + " attempts: " + last_error,
                         policy.max_attempts);
}

}  // namespace adapcr::detail
