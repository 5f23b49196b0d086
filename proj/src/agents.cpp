#include "clinmas/agents.hpp"

namespace clinmas {

namespace {

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

std::string system_prompt(const PromptTemplates& templates, const AgentRole& role) {
    switch (role.kind) {
        case RoleKind::Specialist:
            return render(templates.get("specialist_system"),
                          {{"role", role.specialist.specialty},
                           {"expertise", role.specialist.expertise.empty() ? std::string("general clinical practice")
                                                                            : join(role.specialist.expertise, "; ")}});
        case RoleKind::Generic: return templates.get("generic_system");
        case RoleKind::Baseline: return templates.get("baseline_system");
    }
    return {};
}

}  // namespace

AgentSettings AgentSettings::from(const RunConfig& config, const PromptTemplates& templates) {
    AgentSettings s;
    s.templates = &templates;
    s.reasoning_temperature = config.reasoning_temperature;
    s.max_output_tokens = config.max_output_tokens;
    s.compaction = {config.context_limit_tokens, config.compaction_threshold, config.summarizer_temperature,
                    config.max_output_tokens};
    return s;
}

AgentContext::AgentContext(std::string agent_id, AgentRole role, const SoapNote& note, ProblemLabel problem,
                           int panel_index, const Gateway& gateway)
    : agent_id_(std::move(agent_id)),
      role_(std::move(role)),
      problem_(std::move(problem)),
      note_so_text_(so_text(note)),
      note_id_(note.note_id),
      panel_index_(panel_index),
      history_(gateway) {}

Verdict AgentContext::ask(Gateway& gateway, const AgentSettings& settings, std::string user_prompt, int round_index,
                          const char* purpose) {
    if (!settings.templates) throw InvalidArgument("agent settings lack templates");
    if (history_.size() == 0) history_.append({ChatMessage::Role::System, system_prompt(*settings.templates, role_)});
    history_.append({ChatMessage::Role::User, std::move(user_prompt)});

    CallTag tag{note_id_, problem_.canonical_name, agent_id_, role_.key(), panel_index_, round_index, purpose};
    auto compacted = maybe_compact(history_, settings.compaction, gateway, tag);
    if (compacted.warning) warnings_.push_back(compacted.detail);
    history_ = std::move(compacted.history);

    CompletionRequest req;
    req.messages = history_.messages();
    req.temperature = settings.reasoning_temperature;
    req.schema = SchemaId::Verdict;
    req.max_output_tokens = settings.max_output_tokens;
    req.tag = tag;
    auto record = gateway.complete(req);
    history_.append({ChatMessage::Role::Assistant, record.value().dump()});
    return record.verdict();
}

Verdict AgentContext::analyze_independent(Gateway& gateway, const AgentSettings& settings,
                                          const std::optional<std::string>& prior_summary) {
    const auto& t = *settings.templates;
    std::string summary_block;
    if (prior_summary && !prior_summary->empty()) {
        summary_block = render(t.get("prior_summary_block"), {{"summary", *prior_summary}});
    }
    auto prompt = render(t.get("analyze_user"),
                         {{"problem", problem_.canonical_name}, {"note", note_so_text_}, {"prior_summary", summary_block}});
    return ask(gateway, settings, std::move(prompt), 1, "analyze");
}

std::string render_peer_block(const PromptTemplates& templates, const std::vector<AgentTurn>& peer_turns) {
    if (peer_turns.empty()) return templates.get("no_peers");
    std::string block;
    for (const auto& turn : peer_turns) {
        block += render(templates.get("peer_entry"), {{"peer_role", turn.role.display()},
                                                      {"peer_id", turn.agent_id},
                                                      {"peer_choice", std::string(to_string(turn.verdict.choice))},
                                                      {"peer_reasoning", turn.verdict.reasoning}});
    }
    return block;
}

Verdict AgentContext::reconsider(Gateway& gateway, const AgentSettings& settings,
                                 const std::vector<AgentTurn>& peer_turns, int round_index) {
    if (round_index < 2) throw InvalidArgument("reconsider is for rounds 2 and later");
    if (history_.size() == 0) throw InvalidArgument("reconsider before the agent's independent analysis");
    const auto& t = *settings.templates;
    auto prompt = render(t.get("reconsider_user"), {{"problem", problem_.canonical_name},
                                                   {"round", std::to_string(round_index)},
                                                   {"peer_block", render_peer_block(t, peer_turns)}});
    return ask(gateway, settings, std::move(prompt), round_index, "reconsider");
}

CaseTranscript baseline_zero_shot(const SoapNote& note, const ProblemLabel& problem, Gateway& gateway,
                                  const AgentSettings& settings, const std::string& config_id,
                                  const ProtocolLimits& limits) {
    if (!settings.templates) throw InvalidArgument("agent settings lack templates");
    const auto& t = *settings.templates;
    const std::string agent_id = "baseline";
    History history(gateway);
    history.append({ChatMessage::Role::System, t.get("baseline_system")});
    history.append({ChatMessage::Role::User,
                    render(t.get("baseline_user"), {{"problem", problem.canonical_name}, {"note", so_text(note)}})});

    CallTag tag{note.note_id, problem.canonical_name, agent_id, "baseline", 0, 1, "baseline"};
    history = maybe_compact(history, settings.compaction, gateway, tag).history;

    CompletionRequest req;
    req.messages = history.messages();
    req.temperature = settings.reasoning_temperature;
    req.schema = SchemaId::Verdict;
    req.max_output_tokens = settings.max_output_tokens;
    req.tag = tag;
    Verdict v = gateway.complete(req).verdict();

    CaseTranscript tr;
    tr.note_id = note.note_id;
    tr.problem = problem.canonical_name;
    tr.config_id = config_id;
    tr.limits = limits;
    PanelRecord panel;
    panel.roster.push_back({agent_id, AgentRole::baseline()});
    panel.rounds.push_back({AgentTurn{agent_id, AgentRole::baseline(), 0, 1, v}});
    tr.panels.push_back(std::move(panel));
    tr.final_choice = v.choice;
    tr.decision_source = DecisionSource::Baseline;
    return tr;
}

}  // namespace clinmas
