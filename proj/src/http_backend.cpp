#include "clinmas/http_backend.hpp"

#include <cmath>
#include <cstdlib>

#include <httplib.h>

namespace clinmas {

using nlohmann::json;

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
    std::string url = options_.base_url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw InvalidArgument("base URL needs a scheme: " + options_.base_url);
    auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    if (prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0) {
        path_ = prefix + "/chat/completions";
    } else {
        path_ = prefix + "/v1/chat/completions";
    }
    if (!(options_.timeout_seconds > 0)) throw InvalidArgument("timeout must be positive");
}

std::string HttpBackend::descriptor() const { return "http:" + scheme_host_port_ + path_; }

BackendReply HttpBackend::send(const CompletionRequest& /*req*/, const std::string& body) {
    httplib::Client client(scheme_host_port_);
    const auto secs = static_cast<time_t>(options_.timeout_seconds);
    const auto usecs = static_cast<time_t>((options_.timeout_seconds - std::floor(options_.timeout_seconds)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (const char* token = std::getenv(options_.api_key_env.c_str()); token && *token) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
        throw TransportError("HTTP request to " + scheme_host_port_ + " failed: " + httplib::to_string(res.error()),
                             true);
    }
    if (res->status == 429 || res->status >= 500) {
        throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200), true);
    }
    if (res->status != 200) {
        throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200), false);
    }

    auto parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw TransportError("response body is not JSON", true);
    BackendReply reply;
    try {
        const auto& message = parsed.at("choices").at(0).at("message");
        if (message.contains("content") && message["content"].is_string()) {
            reply.content = message["content"].get<std::string>();
        }
        if (auto usage = parsed.find("usage"); usage != parsed.end() && usage->is_object()) {
            if (usage->contains("prompt_tokens")) reply.prompt_tokens = usage->at("prompt_tokens").get<int>();
            if (usage->contains("completion_tokens")) reply.completion_tokens = usage->at("completion_tokens").get<int>();
        }
    } catch (const json::exception& e) {
        throw TransportError(std::string("unexpected response shape: ") + e.what(), true);
    }
    return reply;
}

}  // namespace clinmas
