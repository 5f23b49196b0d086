#include "clinmas/codec.hpp"

#include <sstream>

namespace clinmas {

namespace {

const json& field(const json& j, const char* key) {
    if (!j.is_object()) throw DecodeError("expected an object while reading '" + std::string(key) + "'");
    auto it = j.find(key);
    if (it == j.end()) throw DecodeError(std::string("missing field '") + key + "'");
    return *it;
}

std::string get_string(const json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_string()) throw DecodeError(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

int get_int(const json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_number_integer()) throw DecodeError(std::string("field '") + key + "' must be an integer");
    return v.get<int>();
}

double get_number(const json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_number()) throw DecodeError(std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

const json& get_array(const json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_array()) throw DecodeError(std::string("field '") + key + "' must be an array");
    return v;
}

std::vector<std::string> get_strings(const json& j, const char* key) {
    std::vector<std::string> out;
    for (const auto& s : get_array(j, key)) {
        if (!s.is_string()) throw DecodeError(std::string("field '") + key + "' must hold strings");
        out.push_back(s.get<std::string>());
    }
    return out;
}

Choice get_choice(const json& j, const char* key) {
    auto c = parse_choice(get_string(j, key));
    if (!c) throw DecodeError(std::string("field '") + key + "' must be \"Yes\" or \"No\"");
    return *c;
}

}  // namespace

json encode_verdict(const Verdict& v) {
    return {{"choice", to_string(v.choice)}, {"reasoning", v.reasoning}};
}

Verdict decode_verdict(const json& j) {
    return {get_choice(j, "choice"), get_string(j, "reasoning")};
}

json encode_role(const AgentRole& r) {
    switch (r.kind) {
        case RoleKind::Generic: return {{"kind", "generic"}};
        case RoleKind::Baseline: return {{"kind", "baseline"}};
        case RoleKind::Specialist:
            return {{"kind", "specialist"},
                    {"specialty", r.specialist.specialty},
                    {"normalized_specialty", r.specialist.normalized_specialty},
                    {"expertise", r.specialist.expertise}};
    }
    return {};
}

AgentRole decode_role(const json& j) {
    auto kind = get_string(j, "kind");
    if (kind == "generic") return AgentRole::generic();
    if (kind == "baseline") return AgentRole::baseline();
    if (kind != "specialist") throw DecodeError("unknown role kind '" + kind + "'");
    SpecialistRole s;
    s.specialty = get_string(j, "specialty");
    s.normalized_specialty = get_string(j, "normalized_specialty");
    s.expertise = get_strings(j, "expertise");
    if (s.normalized_specialty.empty()) throw DecodeError("normalized_specialty is empty");
    return AgentRole::of(std::move(s));
}

json encode_turn(const AgentTurn& t) {
    return {{"agent_id", t.agent_id},
            {"role", encode_role(t.role)},
            {"panel_index", t.panel_index},
            {"round_index", t.round_index},
            {"verdict", encode_verdict(t.verdict)}};
}

AgentTurn decode_turn(const json& j) {
    AgentTurn t;
    t.agent_id = get_string(j, "agent_id");
    t.role = decode_role(field(j, "role"));
    t.panel_index = get_int(j, "panel_index");
    t.round_index = get_int(j, "round_index");
    t.verdict = decode_verdict(field(j, "verdict"));
    return t;
}

json encode_panel(const PanelRecord& p) {
    json roster = json::array();
    for (const auto& slot : p.roster) roster.push_back({{"agent_id", slot.agent_id}, {"role", encode_role(slot.role)}});
    json rounds = json::array();
    for (const auto& round : p.rounds) {
        json turns = json::array();
        for (const auto& t : round) turns.push_back(encode_turn(t));
        rounds.push_back(std::move(turns));
    }
    json j = {{"panel_index", p.panel_index},
              {"roster", std::move(roster)},
              {"rounds", std::move(rounds)},
              {"consensus", p.consensus ? json(to_string(*p.consensus)) : json(nullptr)},
              {"handoff_summary", p.handoff_summary ? json(*p.handoff_summary) : json(nullptr)},
              {"handoff_extractive", p.handoff_extractive}};
    return j;
}

PanelRecord decode_panel(const json& j) {
    PanelRecord p;
    p.panel_index = get_int(j, "panel_index");
    for (const auto& slot : get_array(j, "roster")) {
        p.roster.push_back({get_string(slot, "agent_id"), decode_role(field(slot, "role"))});
    }
    for (const auto& round : get_array(j, "rounds")) {
        if (!round.is_array()) throw DecodeError("each round must be an array of turns");
        Round r;
        for (const auto& t : round) r.push_back(decode_turn(t));
        p.rounds.push_back(std::move(r));
    }
    if (const auto& c = field(j, "consensus"); !c.is_null()) p.consensus = get_choice(j, "consensus");
    if (const auto& s = field(j, "handoff_summary"); !s.is_null()) p.handoff_summary = get_string(j, "handoff_summary");
    const auto& ex = field(j, "handoff_extractive");
    if (!ex.is_boolean()) throw DecodeError("field 'handoff_extractive' must be a boolean");
    p.handoff_extractive = ex.get<bool>();
    return p;
}

json encode_transcript(const CaseTranscript& t) {
    json panels = json::array();
    for (const auto& p : t.panels) panels.push_back(encode_panel(p));
    return {{"note_id", t.note_id},
            {"problem", t.problem},
            {"config_id", t.config_id},
            {"limits",
             {{"consensus_threshold", t.limits.consensus_threshold},
              {"max_rounds", t.limits.max_rounds},
              {"max_panels", t.limits.max_panels}}},
            {"panels", std::move(panels)},
            {"final_choice", to_string(t.final_choice)},
            {"decision_source", to_string(t.decision_source)},
            {"fallback", t.fallback ? encode_verdict(*t.fallback) : json(nullptr)}};
}

CaseTranscript decode_transcript(const json& j) {
    CaseTranscript t;
    t.note_id = get_string(j, "note_id");
    t.problem = get_string(j, "problem");
    t.config_id = get_string(j, "config_id");
    const auto& lim = field(j, "limits");
    t.limits.consensus_threshold = get_number(lim, "consensus_threshold");
    t.limits.max_rounds = get_int(lim, "max_rounds");
    t.limits.max_panels = get_int(lim, "max_panels");
    for (const auto& p : get_array(j, "panels")) t.panels.push_back(decode_panel(p));
    t.final_choice = get_choice(j, "final_choice");
    auto src = parse_decision_source(get_string(j, "decision_source"));
    if (!src) throw DecodeError("unknown decision_source");
    t.decision_source = *src;
    if (const auto& f = field(j, "fallback"); !f.is_null()) t.fallback = decode_verdict(f);
    return t;
}

json encode_config(const RunConfig& c) {
    return {{"name", c.name},
            {"composition_mode", to_string(c.composition_mode)},
            {"team_size", c.team_size ? json(*c.team_size) : json("auto")},
            {"auto_team_cap", c.auto_team_cap},
            {"consensus_threshold", c.consensus_threshold},
            {"max_rounds", c.max_rounds},
            {"max_panels", c.max_panels},
            {"reasoning_temperature", c.reasoning_temperature},
            {"summarizer_temperature", c.summarizer_temperature},
            {"context_limit_tokens", c.context_limit_tokens},
            {"compaction_threshold", c.compaction_threshold},
            {"max_concurrent_requests", c.max_concurrent_requests},
            {"retry_limit", c.retry_limit},
            {"max_output_tokens", c.max_output_tokens},
            {"request_timeout_seconds", c.request_timeout_seconds},
            {"template_dir", c.template_dir}};
}

RunConfig decode_config(const json& j, RunConfig c) {
    if (!j.is_object()) throw DecodeError("config must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "name") c.name = get_string(j, "name");
        else if (key == "composition_mode") {
            auto m = parse_composition_mode(get_string(j, "composition_mode"));
            if (!m) throw DecodeError("unknown composition_mode '" + value.dump() + "'");
            c.composition_mode = *m;
        } else if (key == "team_size") {
            if (value.is_string() && value.get<std::string>() == "auto") c.team_size.reset();
            else c.team_size = get_int(j, "team_size");
        }
        else if (key == "auto_team_cap") c.auto_team_cap = get_int(j, "auto_team_cap");
        else if (key == "consensus_threshold") c.consensus_threshold = get_number(j, "consensus_threshold");
        else if (key == "max_rounds") c.max_rounds = get_int(j, "max_rounds");
        else if (key == "max_panels") c.max_panels = get_int(j, "max_panels");
        else if (key == "reasoning_temperature") c.reasoning_temperature = get_number(j, "reasoning_temperature");
        else if (key == "summarizer_temperature") c.summarizer_temperature = get_number(j, "summarizer_temperature");
        else if (key == "context_limit_tokens") c.context_limit_tokens = get_int(j, "context_limit_tokens");
        else if (key == "compaction_threshold") c.compaction_threshold = get_number(j, "compaction_threshold");
        else if (key == "max_concurrent_requests") c.max_concurrent_requests = get_int(j, "max_concurrent_requests");
        else if (key == "retry_limit") c.retry_limit = get_int(j, "retry_limit");
        else if (key == "max_output_tokens") c.max_output_tokens = get_int(j, "max_output_tokens");
        else if (key == "request_timeout_seconds") c.request_timeout_seconds = get_number(j, "request_timeout_seconds");
        else if (key == "template_dir") c.template_dir = get_string(j, "template_dir");
        else throw DecodeError("unknown config field '" + key + "'");
    }
    return c;
}

json encode_note(const SoapNote& n) {
    json lines = json::array();
    auto emit = [&](const char* label, const std::string& text) {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) lines.push_back({{"label", label}, {"text", line}});
    };
    emit("S", n.subjective);
    emit("O", n.objective);
    if (n.assessment) emit("A", *n.assessment);
    if (n.plan) emit("P", *n.plan);
    return {{"note_id", n.note_id}, {"lines", std::move(lines)}, {"gold_problems", n.gold_problems}};
}

}  // namespace clinmas
