#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clinmas/gateway.hpp"

namespace clinmas {

/// One line of a script file. Unset match fields are wildcards.
///
///   {"role_key": "cardiologist", "round": 2, "schema_id": "verdict",
///    "response": {"choice": "Yes", "reasoning": "..."}}
///
/// Optional match fields: note_id, problem, agent_id, panel. A string
/// `response` is returned verbatim (useful for malformed replies); any other
/// JSON value is serialized. `"transport_error": true` simulates a failed
/// attempt instead.
struct ScriptEntry {
    std::optional<std::string> role_key;
    std::optional<int> round;
    std::optional<SchemaId> schema;
    std::optional<std::string> note_id;
    std::optional<std::string> problem;
    std::optional<std::string> agent_id;
    std::optional<int> panel;
    nlohmann::json response;
    bool transport_error = false;

    bool matches(const CompletionRequest& req) const;
    int specificity() const noexcept;
};

ScriptEntry parse_script_entry(const nlohmann::json& j);

/// Deterministic backend replaying a script. The most specific matching
/// entries win (ties keep file order); repeated attempts of the same logical
/// call walk through that group in order and stick on its last entry.
class ScriptedBackend : public Backend {
public:
    ScriptedBackend() = default;
    explicit ScriptedBackend(std::vector<ScriptEntry> entries) : entries_(std::move(entries)) {}

    static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);
    static std::shared_ptr<ScriptedBackend> from_jsonl(const std::string& text);

    void add(ScriptEntry e);

    BackendReply send(const CompletionRequest& req, const std::string& body) override;
    std::string descriptor() const override;

private:
    std::vector<ScriptEntry> entries_;
    std::string source_ = "inline";
    std::mutex mu_;
    std::map<std::string, int> attempts_;
};

}  // namespace clinmas
