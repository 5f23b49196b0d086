#pragma once

#include <string>

#include "clinmas/gateway.hpp"

namespace clinmas {

struct HttpBackendOptions {
    std::string base_url;                       // e.g. http://localhost:8000 or https://host/v1
    std::string api_key_env = "CLINMAS_API_KEY";  // bearer token source; unset variable sends no auth
    double timeout_seconds = 120.0;
};

/// Client for an OpenAI-compatible /v1/chat/completions endpoint.
/// A fresh connection is opened per attempt, so one instance may be shared
/// by any number of threads.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendOptions options);

    BackendReply send(const CompletionRequest& req, const std::string& body) override;
    std::string descriptor() const override;

    const std::string& endpoint_path() const noexcept { return path_; }

private:
    HttpBackendOptions options_;
    std::string scheme_host_port_;
    std::string path_;
};

}  // namespace clinmas
