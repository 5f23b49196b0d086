#include "clinmas/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <thread>

#include "clinmas/hashing.hpp"

namespace clinmas {

using nlohmann::json;

std::string_view to_string(SchemaId s) noexcept {
    switch (s) {
        case SchemaId::Verdict: return "verdict";
        case SchemaId::RoleList: return "role_list";
        case SchemaId::ExpertiseList: return "expertise_list";
        case SchemaId::Summary: return "summary";
    }
    return "verdict";
}

std::optional<SchemaId> parse_schema_id(std::string_view s) noexcept {
    if (s == "verdict") return SchemaId::Verdict;
    if (s == "role_list") return SchemaId::RoleList;
    if (s == "expertise_list") return SchemaId::ExpertiseList;
    if (s == "summary") return SchemaId::Summary;
    return std::nullopt;
}

std::string_view to_string(ChatMessage::Role r) noexcept {
    switch (r) {
        case ChatMessage::Role::System: return "system";
        case ChatMessage::Role::User: return "user";
        case ChatMessage::Role::Assistant: return "assistant";
    }
    return "user";
}

std::optional<ResponseFormat> parse_response_format(std::string_view s) noexcept {
    if (s == "json_schema") return ResponseFormat::JsonSchema;
    if (s == "json_object") return ResponseFormat::JsonObject;
    if (s == "none") return ResponseFormat::None;
    return std::nullopt;
}

json schema_document(SchemaId s) {
    auto string_list = [](const char* key) {
        return json{{"type", "object"},
                    {"properties", {{key, {{"type", "array"}, {"items", {{"type", "string"}}}, {"minItems", 1}}}}},
                    {"required", {key}},
                    {"additionalProperties", false}};
    };
    switch (s) {
        case SchemaId::Verdict:
            return {{"type", "object"},
                    {"properties",
                     {{"reasoning", {{"type", "string"}}}, {"choice", {{"type", "string"}, {"enum", {"Yes", "No"}}}}}},
                    {"required", {"reasoning", "choice"}},
                    {"additionalProperties", false}};
        case SchemaId::RoleList: return string_list("specialties");
        case SchemaId::ExpertiseList: return string_list("expertise");
        case SchemaId::Summary:
            return {{"type", "object"},
                    {"properties", {{"summary", {{"type", "string"}}}}},
                    {"required", {"summary"}},
                    {"additionalProperties", false}};
    }
    return {};
}

namespace {

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

json parse_object(std::string_view content) {
    auto parsed = json::parse(content, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) {
        auto first = content.find('{');
        auto last = content.rfind('}');
        if (first == std::string_view::npos || last == std::string_view::npos || last < first) {
            throw SchemaViolation("reply is not a JSON object");
        }
        parsed = json::parse(content.substr(first, last - first + 1), nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) throw SchemaViolation("reply is not a JSON object");
    }
    return parsed;
}

std::vector<std::string> non_empty_strings(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_array()) throw SchemaViolation(std::string("'") + key + "' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& v : *it) {
        if (!v.is_string() || blank(v.get<std::string>())) {
            throw SchemaViolation(std::string("'") + key + "' must contain only non-empty strings");
        }
        out.push_back(v.get<std::string>());
    }
    if (out.empty()) throw SchemaViolation(std::string("'") + key + "' must not be empty");
    return out;
}

std::string non_empty_string(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string() || blank(it->get<std::string>())) {
        throw SchemaViolation(std::string("'") + key + "' must be a non-empty string");
    }
    return it->get<std::string>();
}

}  // namespace

json validate_reply(SchemaId schema, std::string_view content) {
    const json obj = parse_object(content);
    switch (schema) {
        case SchemaId::Verdict: {
            auto reasoning = non_empty_string(obj, "reasoning");
            auto raw = non_empty_string(obj, "choice");
            std::string folded;
            for (char c : raw) {
                if (!std::isspace(static_cast<unsigned char>(c))) folded.push_back(static_cast<char>(std::tolower(c)));
            }
            if (folded != "yes" && folded != "no") throw SchemaViolation("'choice' must be \"Yes\" or \"No\"");
            return {{"choice", folded == "yes" ? "Yes" : "No"}, {"reasoning", reasoning}};
        }
        case SchemaId::RoleList: return {{"specialties", non_empty_strings(obj, "specialties")}};
        case SchemaId::ExpertiseList: return {{"expertise", non_empty_strings(obj, "expertise")}};
        case SchemaId::Summary: return {{"summary", non_empty_string(obj, "summary")}};
    }
    throw SchemaViolation("unknown schema");
}

Verdict StructuredRecord::verdict() const {
    if (schema_ != SchemaId::Verdict) throw Error("record is not a verdict");
    return {*parse_choice(value_.at("choice").get<std::string>()), value_.at("reasoning").get<std::string>()};
}

std::vector<std::string> StructuredRecord::specialties() const {
    if (schema_ != SchemaId::RoleList) throw Error("record is not a role list");
    return value_.at("specialties").get<std::vector<std::string>>();
}

std::vector<std::string> StructuredRecord::expertise() const {
    if (schema_ != SchemaId::ExpertiseList) throw Error("record is not an expertise list");
    return value_.at("expertise").get<std::vector<std::string>>();
}

std::string StructuredRecord::summary() const {
    if (schema_ != SchemaId::Summary) throw Error("record is not a summary");
    return value_.at("summary").get<std::string>();
}

json build_request_body(const CompletionRequest& req, const std::string& model, ResponseFormat format) {
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    json body = {{"model", model},
                 {"messages", std::move(messages)},
                 {"temperature", req.temperature},
                 {"max_tokens", req.max_output_tokens}};
    switch (format) {
        case ResponseFormat::JsonSchema:
            body["response_format"] = {
                {"type", "json_schema"},
                {"json_schema", {{"name", to_string(req.schema)}, {"schema", schema_document(req.schema)}, {"strict", true}}}};
            break;
        case ResponseFormat::JsonObject: body["response_format"] = {{"type", "json_object"}}; break;
        case ResponseFormat::None: break;
    }
    return body;
}

std::size_t heuristic_token_count(std::string_view text) noexcept { return (text.size() + 3) / 4; }

std::size_t Backend::count_tokens(std::string_view text) const { return heuristic_token_count(text); }

std::shared_ptr<CallLog> CallLog::to_file(const std::filesystem::path& path, bool retain_bodies) {
    auto log = std::make_shared<CallLog>(retain_bodies);
    log->sink_.open(path, std::ios::app);
    if (!log->sink_) throw Error("cannot open call log " + path.string());
    return log;
}

void CallLog::append(json entry) {
    std::lock_guard lock(mu_);
    if (sink_.is_open()) {
        sink_ << entry.dump() << '\n';
        sink_.flush();
    }
    entries_.push_back(std::move(entry));
}

std::vector<json> CallLog::entries() const {
    std::lock_guard lock(mu_);
    return entries_;
}

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options, std::shared_ptr<CallLog> log)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      log_(std::move(log)),
      limiter_(std::clamp(options_.max_concurrent_requests, 1, 4096)) {
    if (!backend_) throw InvalidArgument("gateway needs a backend");
    if (options_.retry_limit < 1) throw InvalidArgument("retry_limit must be at least 1");
}

void Gateway::record(const CompletionRequest& req, const std::string& body, int attempt, std::string_view outcome,
                     const std::string& detail, const BackendReply* reply) {
    if (!log_) return;
    json entry = {{"note_id", req.tag.note_id},
                  {"problem", req.tag.problem},
                  {"agent_id", req.tag.agent_id},
                  {"role_key", req.tag.role_key},
                  {"panel", req.tag.panel},
                  {"round", req.tag.round},
                  {"purpose", req.tag.purpose},
                  {"schema_id", to_string(req.schema)},
                  {"temperature", req.temperature},
                  {"attempt", attempt},
                  {"outcome", outcome},
                  {"prompt_tokens_est", heuristic_token_count(body)},
                  {"body_sha256", sha256_hex(body)}};
    if (!detail.empty()) entry["detail"] = detail;
    if (reply) {
        if (reply->prompt_tokens) entry["prompt_tokens"] = *reply->prompt_tokens;
        if (reply->completion_tokens) entry["completion_tokens"] = *reply->completion_tokens;
    }
    if (log_->retain_bodies()) {
        entry["request_body"] = body;
        if (reply) entry["response"] = reply->content;
    }
    log_->append(std::move(entry));
}

StructuredRecord Gateway::complete(const CompletionRequest& req) {
    if (req.messages.empty()) throw InvalidArgument("completion request has no messages");
    for (const auto& m : req.messages) {
        if (m.content.empty()) throw InvalidArgument("chat message content is empty");
    }
    if (req.temperature < 0) throw InvalidArgument("temperature must be non-negative");

    CompletionRequest attempt_req = req;
    std::string last_error;
    bool last_was_schema = false;

    for (int attempt = 1; attempt <= options_.retry_limit; ++attempt) {
        const std::string body = build_request_body(attempt_req, options_.model, options_.response_format).dump();
        BackendReply reply;
        try {
            limiter_.acquire();
            try {
                reply = backend_->send(attempt_req, body);
            } catch (...) {
                limiter_.release();
                throw;
            }
            limiter_.release();
        } catch (const TransportError& e) {
            record(attempt_req, body, attempt, "transport_error", e.what(), nullptr);
            if (!e.retryable()) throw;
            last_error = e.what();
            last_was_schema = false;
            if (attempt < options_.retry_limit && options_.backoff_base.count() > 0) {
                std::this_thread::sleep_for(options_.backoff_base * (1 << std::min(attempt - 1, 10)));
            }
            continue;
        }

        try {
            json value = validate_reply(req.schema, reply.content);
            record(attempt_req, body, attempt, "ok", {}, &reply);
            return StructuredRecord(req.schema, std::move(value));
        } catch (const SchemaViolation& e) {
            record(attempt_req, body, attempt, "schema_violation", e.what(), &reply);
            last_error = e.what();
            last_was_schema = true;
            attempt_req.messages.push_back(
                {ChatMessage::Role::Assistant, reply.content.empty() ? std::string("(empty reply)") : reply.content});
            attempt_req.messages.push_back(
                {ChatMessage::Role::User, "Your previous reply was rejected: " + last_error +
                                              ". Reply again with only a JSON object matching this schema: " +
                                              schema_document(req.schema).dump()});
        }
    }

    const std::string msg = "call failed after " + std::to_string(options_.retry_limit) + " attempts (" +
                            std::string(to_string(req.schema)) + ", agent '" + req.tag.agent_id + "'): " + last_error;
    if (last_was_schema) throw SchemaViolation(msg);
    throw TransportError(msg, false);
}

}  // namespace clinmas
