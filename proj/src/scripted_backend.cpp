#include "clinmas/scripted_backend.hpp"

#include <fstream>
#include <sstream>

#include "clinmas/hashing.hpp"

namespace clinmas {

using nlohmann::json;

bool ScriptEntry::matches(const CompletionRequest& req) const {
    const auto& t = req.tag;
    if (role_key && *role_key != t.role_key) return false;
    if (round && *round != t.round) return false;
    if (schema && *schema != req.schema) return false;
    if (note_id && *note_id != t.note_id) return false;
    if (problem && *problem != t.problem) return false;
    if (agent_id && *agent_id != t.agent_id) return false;
    if (panel && *panel != t.panel) return false;
    return true;
}

int ScriptEntry::specificity() const noexcept {
    return int(role_key.has_value()) + int(round.has_value()) + int(schema.has_value()) + int(note_id.has_value()) +
           int(problem.has_value()) + int(agent_id.has_value()) + int(panel.has_value());
}

ScriptEntry parse_script_entry(const json& j) {
    if (!j.is_object()) throw InvalidArgument("script entry must be an object");
    ScriptEntry e;
    auto opt_string = [&](const char* key, std::optional<std::string>& out) {
        if (auto it = j.find(key); it != j.end() && !it->is_null()) {
            if (!it->is_string()) throw InvalidArgument(std::string("script field '") + key + "' must be a string");
            out = it->get<std::string>();
        }
    };
    auto opt_int = [&](const char* key, std::optional<int>& out) {
        if (auto it = j.find(key); it != j.end() && !it->is_null()) {
            if (!it->is_number_integer()) throw InvalidArgument(std::string("script field '") + key + "' must be an integer");
            out = it->get<int>();
        }
    };
    opt_string("role_key", e.role_key);
    if (e.role_key && *e.role_key != "manager" && *e.role_key != "generic" && *e.role_key != "baseline") {
        e.role_key = normalize_role(*e.role_key);
    }
    opt_int("round", e.round);
    std::optional<std::string> schema;
    opt_string("schema_id", schema);
    if (schema) {
        e.schema = parse_schema_id(*schema);
        if (!e.schema) throw InvalidArgument("unknown schema_id '" + *schema + "'");
    }
    opt_string("note_id", e.note_id);
    opt_string("problem", e.problem);
    opt_string("agent_id", e.agent_id);
    opt_int("panel", e.panel);
    if (auto it = j.find("transport_error"); it != j.end()) e.transport_error = it->get<bool>();
    if (auto it = j.find("response"); it != j.end()) e.response = *it;
    else if (!e.transport_error) throw InvalidArgument("script entry needs a response");
    return e;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_jsonl(const std::string& text) {
    auto backend = std::make_shared<ScriptedBackend>();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            backend->add(parse_script_entry(json::parse(line)));
        } catch (const std::exception& e) {
            throw InvalidArgument("script line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    backend->source_ = "sha256:" + sha256_hex(text).substr(0, 16);
    return backend;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open script file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_jsonl(ss.str());
}

void ScriptedBackend::add(ScriptEntry e) { entries_.push_back(std::move(e)); }

std::string ScriptedBackend::descriptor() const { return "scripted:" + source_; }

BackendReply ScriptedBackend::send(const CompletionRequest& req, const std::string& /*body*/) {
    std::vector<const ScriptEntry*> group;
    int best = -1;
    for (const auto& e : entries_) {
        if (!e.matches(req)) continue;
        int s = e.specificity();
        if (s > best) {
            best = s;
            group.clear();
        }
        if (s == best) group.push_back(&e);
    }
    if (group.empty()) {
        throw TransportError("no script entry for role '" + req.tag.role_key + "' round " +
                                 std::to_string(req.tag.round) + " schema " + std::string(to_string(req.schema)),
                             false);
    }

    const std::string call_key = req.tag.note_id + '\x1f' + req.tag.problem + '\x1f' + req.tag.agent_id + '\x1f' +
                                 std::to_string(req.tag.panel) + '\x1f' + std::to_string(req.tag.round) + '\x1f' +
                                 req.tag.purpose + '\x1f' + std::string(to_string(req.schema));
    int index = 0;
    {
        std::lock_guard lock(mu_);
        index = attempts_[call_key]++;
    }
    const ScriptEntry& e = *group[std::min<std::size_t>(index, group.size() - 1)];
    if (e.transport_error) throw TransportError("scripted transport failure", true);
    BackendReply reply;
    reply.content = e.response.is_string() ? e.response.get<std::string>() : e.response.dump();
    return reply;
}

}  // namespace clinmas
