#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "clinmas/domain.hpp"

namespace clinmas {

enum class SchemaId : std::uint8_t { Verdict, RoleList, ExpertiseList, Summary };

std::string_view to_string(SchemaId s) noexcept;
std::optional<SchemaId> parse_schema_id(std::string_view s) noexcept;

/// JSON Schema document sent to backends that support constrained decoding.
nlohmann::json schema_document(SchemaId s);

struct ChatMessage {
    enum class Role : std::uint8_t { System, User, Assistant };
    Role role = Role::User;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

std::string_view to_string(ChatMessage::Role r) noexcept;

// Routing metadata for a call. Never sent over the wire; used by the scripted
// backend for keying and by the call log.
struct CallTag {
    std::string note_id;
    std::string problem;
    std::string agent_id;
    std::string role_key;  // normalized role, "generic", "baseline" or "manager"
    int panel = -1;
    int round = 0;         // 0 for calls outside the debate rounds
    std::string purpose;   // free-form, e.g. "analyze", "compaction"
};

struct CompletionRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.5;
    SchemaId schema = SchemaId::Verdict;
    int max_output_tokens = 1024;
    CallTag tag;
};

/// A reply that passed validation against its schema.
class StructuredRecord {
public:
    StructuredRecord(SchemaId schema, nlohmann::json value) : schema_(schema), value_(std::move(value)) {}

    SchemaId schema() const noexcept { return schema_; }
    const nlohmann::json& value() const noexcept { return value_; }

    Verdict verdict() const;
    std::vector<std::string> specialties() const;
    std::vector<std::string> expertise() const;
    std::string summary() const;

private:
    SchemaId schema_;
    nlohmann::json value_;
};

class TransportError : public Error {
public:
    TransportError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

class SchemaViolation : public Error {
public:
    using Error::Error;
};

/// Parses reply text and checks it against the schema. Tolerates a Markdown
/// code fence or prose around a single JSON object.
nlohmann::json validate_reply(SchemaId schema, std::string_view content);

struct BackendReply {
    std::string content;
    std::optional<int> prompt_tokens;
    std::optional<int> completion_tokens;
};

enum class ResponseFormat : std::uint8_t { JsonSchema, JsonObject, None };

std::optional<ResponseFormat> parse_response_format(std::string_view s) noexcept;

/// OpenAI-compatible chat-completions request body.
nlohmann::json build_request_body(const CompletionRequest& req, const std::string& model, ResponseFormat format);

class Backend {
public:
    virtual ~Backend() = default;

    /// Sends one attempt. Throws TransportError on failure.
    virtual BackendReply send(const CompletionRequest& req, const std::string& body) = 0;

    /// ceil(bytes / 4) unless a backend knows better.
    virtual std::size_t count_tokens(std::string_view text) const;

    virtual std::string descriptor() const = 0;
};

/// ceil(bytes / 4).
std::size_t heuristic_token_count(std::string_view text) noexcept;

/// Thread-safe, append-only record of every attempt the gateway makes.
class CallLog {
public:
    explicit CallLog(bool retain_bodies = true) : retain_bodies_(retain_bodies) {}

    /// Also appends each entry as one JSON line to `path`.
    static std::shared_ptr<CallLog> to_file(const std::filesystem::path& path, bool retain_bodies);

    bool retain_bodies() const noexcept { return retain_bodies_; }
    void append(nlohmann::json entry);
    std::vector<nlohmann::json> entries() const;

private:
    bool retain_bodies_;
    mutable std::mutex mu_;
    std::vector<nlohmann::json> entries_;
    std::ofstream sink_;
};

struct GatewayOptions {
    std::string model = "default";
    ResponseFormat response_format = ResponseFormat::JsonSchema;
    int retry_limit = 3;  // total attempts per call
    int max_concurrent_requests = 8;
    std::chrono::milliseconds backoff_base{250};
};

/// Uniform entry point for completions: bounded concurrency, schema
/// validation with corrective retries, transport retries with exponential
/// backoff, and call logging. Safe to share across threads.
class Gateway {
public:
    Gateway(std::shared_ptr<Backend> backend, GatewayOptions options, std::shared_ptr<CallLog> log = nullptr);

    /// Returns a validated record or throws SchemaViolation / TransportError.
    StructuredRecord complete(const CompletionRequest& req);

    std::size_t count_tokens(std::string_view text) const { return backend_->count_tokens(text); }

    const GatewayOptions& options() const noexcept { return options_; }
    const std::shared_ptr<CallLog>& log() const noexcept { return log_; }
    std::string descriptor() const { return backend_->descriptor(); }

private:
    void record(const CompletionRequest& req, const std::string& body, int attempt, std::string_view outcome,
                const std::string& detail, const BackendReply* reply);

    std::shared_ptr<Backend> backend_;
    GatewayOptions options_;
    std::shared_ptr<CallLog> log_;
    std::counting_semaphore<4096> limiter_;
};

}  // namespace clinmas
