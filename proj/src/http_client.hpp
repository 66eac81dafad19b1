#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

namespace adapcr::detail {

struct RetryPolicy {
    int max_attempts = 3;
    int backoff_ms = 50;  // doubled after every failed attempt
};

/// POSTs `body` to endpoint + path and parses the JSON reply. Connection
/// failures and 5xx replies are retried; exhausting the policy throws
/// TransportError. Non-JSON or 4xx replies throw ContractError.
nlohmann::json post_json(std::string_view endpoint, std::string_view path, const nlohmann::json& body,
                         const RetryPolicy& policy);

}  // namespace adapcr::detail
