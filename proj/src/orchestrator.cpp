#include "clinmas/orchestrator.hpp"

#include <algorithm>
#include <future>
#include <map>

#include "clinmas/context_window.hpp"

namespace clinmas {

namespace {

std::string agent_id_for(int panel_index, std::size_t slot) {
    return "p" + std::to_string(panel_index) + "-a" + std::to_string(slot);
}

// Runs one call per agent concurrently and returns verdicts in roster order.
// Every task is joined before the first failure is rethrown.
template <typename Fn>
std::vector<Verdict> fan_out(std::vector<AgentContext>& agents, Fn fn) {
    std::vector<std::future<Verdict>> futures;
    futures.reserve(agents.size());
    for (auto& agent : agents) futures.push_back(std::async(std::launch::async, [&agent, &fn] { return fn(agent); }));
    std::vector<Verdict> out;
    std::exception_ptr first_error;
    for (auto& f : futures) {
        try {
            out.push_back(f.get());
        } catch (...) {
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

std::string first_sentence(const std::string& text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\n')) {
            return text.substr(0, i + 1);
        }
    }
    return text;
}

}  // namespace

const std::vector<std::string>& static_roles_for(const std::string& problem) {
    static const std::map<std::string, std::vector<std::string>> kStatic = {
        {"congestive heart failure", {"Cardiologist", "Cardiac Electrophysiologist"}},
        {"acute kidney injury", {"Nephrologist", "Intensive Care Specialist"}},
        {"sepsis", {"Infectious Disease Specialist", "Intensive Care Specialist"}},
    };
    auto it = kStatic.find(problem);
    if (it == kStatic.end()) throw ConfigError("no pre-defined specialists for problem '" + problem + "'");
    return it->second;
}

std::string extractive_summary(const PanelRecord& panel) {
    std::string out;
    if (panel.rounds.empty()) return out;
    for (const auto& turn : panel.rounds.back()) {
        out += turn.role.display() + " (" + turn.agent_id + "): " + std::string(to_string(turn.verdict.choice)) + ". " +
               first_sentence(turn.verdict.reasoning) + "\n";
    }
    return out;
}

Manager::Manager(Gateway& gateway, RunConfig config, const PromptTemplates& templates)
    : gateway_(gateway),
      config_(std::move(config)),
      templates_(templates),
      settings_(AgentSettings::from(config_, templates)) {
    config_.validate();
}

CallTag Manager::manager_tag(const std::string& note_id, const ProblemLabel& problem, int panel_index,
                             const char* purpose) const {
    return CallTag{note_id, problem.canonical_name, "manager", "manager", panel_index, 0, purpose};
}

SpecialistRole Manager::with_expertise(const std::string& specialty, const SoapNote& note, const ProblemLabel& problem,
                                       int panel_index) {
    auto role = SpecialistRole::make(specialty);
    CompletionRequest req;
    req.messages = {{ChatMessage::Role::System, templates_.get("manager_system")},
                    {ChatMessage::Role::User,
                     render(templates_.get("manager_expertise_user"),
                            {{"role", role.specialty}, {"problem", problem.canonical_name}, {"note", so_text(note)}})}};
    req.temperature = config_.reasoning_temperature;
    req.schema = SchemaId::ExpertiseList;
    req.max_output_tokens = config_.max_output_tokens;
    req.tag = manager_tag(note.note_id, problem, panel_index, "expertise");
    req.tag.purpose += ":" + role.normalized_specialty;
    role.expertise = gateway_.complete(req).expertise();
    return role;
}

std::vector<SpecialistRole> Manager::create_roles(const SoapNote& note, const ProblemLabel& problem,
                                                  std::optional<int> k, int panel_index,
                                                  const std::set<std::string>& taken) {
    if (k && *k < 1) throw InvalidArgument("team size must be at least 1");
    const int cap = k ? *k : std::max(1, config_.auto_team_cap - static_cast<int>(taken.size()));
    const std::string size_text =
        k ? std::to_string(*k) : "an appropriate number (between 1 and " + std::to_string(cap) + ") of";

    CompletionRequest req;
    req.messages = {{ChatMessage::Role::System, templates_.get("manager_system")},
                    {ChatMessage::Role::User,
                     render(templates_.get("manager_roles_user"),
                            {{"team_size", size_text}, {"problem", problem.canonical_name}, {"note", so_text(note)}})}};
    req.temperature = config_.reasoning_temperature;
    req.schema = SchemaId::RoleList;
    req.max_output_tokens = config_.max_output_tokens;
    req.tag = manager_tag(note.note_id, problem, panel_index, "roles");

    auto issues = [&](const std::vector<std::string>& names) -> std::string {
        std::set<std::string> seen = taken;
        std::vector<std::string> dups;
        for (const auto& n : names) {
            if (!seen.insert(normalize_role(n)).second) dups.push_back(n);
        }
        std::string why;
        if (!dups.empty()) {
            why = "repeated or already assigned specialties:";
            for (const auto& d : dups) why += " \"" + d + "\"";
        }
        if (k && static_cast<int>(names.size()) < *k) {
            if (!why.empty()) why += "; ";
            why += "expected " + std::to_string(*k) + " specialties, got " + std::to_string(names.size());
        }
        return why;
    };

    auto names = gateway_.complete(req).specialties();
    if (auto why = issues(names); !why.empty()) {
        req.messages.push_back({ChatMessage::Role::Assistant, nlohmann::json{{"specialties", names}}.dump()});
        req.messages.push_back({ChatMessage::Role::User, render(templates_.get("manager_roles_retry"),
                                                                {{"problem_with_list", why}, {"team_size", size_text}})});
        names = gateway_.complete(req).specialties();
    }
    if (k && static_cast<int>(names.size()) < *k) {
        throw CaseError("manager proposed " + std::to_string(names.size()) + " specialties, needed " +
                        std::to_string(*k));
    }
    if (names.empty()) throw CaseError("manager proposed no specialties");
    if (static_cast<int>(names.size()) > cap) names.resize(cap);

    // Remaining duplicates get an ordinal suffix: "Cardiologist" -> "Cardiologist (2)".
    std::set<std::string> used = taken;
    std::map<std::string, int> occurrences;
    for (const auto& t : taken) occurrences[t] = 1;
    std::vector<SpecialistRole> roles;
    for (auto name : names) {
        const auto base = normalize_role(name);
        int& seen = occurrences[base];
        ++seen;
        if (used.count(base)) {
            int ordinal = std::max(seen, 2);
            while (used.count(base + " (" + std::to_string(ordinal) + ")")) ++ordinal;
            name = SpecialistRole::make(name).specialty + " (" + std::to_string(ordinal) + ")";
        }
        used.insert(normalize_role(name));
        roles.push_back(with_expertise(name, note, problem, panel_index));
    }
    return roles;
}

std::vector<RosterSlot> Manager::assemble_team(const SoapNote& note, const ProblemLabel& problem, int panel_index) {
    std::vector<AgentRole> roles;
    switch (config_.composition_mode) {
        case CompositionMode::Baseline: throw ConfigError("baseline mode has no team");
        case CompositionMode::Dynamic:
            for (auto& r : create_roles(note, problem, config_.team_size, panel_index)) roles.push_back(AgentRole::of(r));
            break;
        case CompositionMode::Generic:
            roles.assign(static_cast<std::size_t>(*config_.team_size), AgentRole::generic());
            break;
        case CompositionMode::StaticDynamic: {
            const auto& statics = static_roles_for(problem.canonical_name);
            std::set<std::string> taken;
            for (const auto& s : statics) {
                roles.push_back(AgentRole::of(with_expertise(s, note, problem, panel_index)));
                taken.insert(normalize_role(s));
            }
            std::optional<int> dynamic_count;
            if (config_.team_size) {
                if (*config_.team_size < static_cast<int>(statics.size())) {
                    throw ConfigError("static_dynamic needs team_size >= " + std::to_string(statics.size()));
                }
                dynamic_count = *config_.team_size - static_cast<int>(statics.size());
            }
            if (!dynamic_count || *dynamic_count > 0) {
                for (auto& r : create_roles(note, problem, dynamic_count, panel_index, taken)) {
                    roles.push_back(AgentRole::of(r));
                }
            }
            break;
        }
        case CompositionMode::Hybrid: {
            const auto& statics = static_roles_for(problem.canonical_name);
            roles.push_back(AgentRole::generic());
            roles.push_back(AgentRole::generic());
            std::set<std::string> taken;
            for (const auto& s : statics) {
                roles.push_back(AgentRole::of(with_expertise(s, note, problem, panel_index)));
                taken.insert(normalize_role(s));
            }
            for (auto& r : create_roles(note, problem, 1, panel_index, taken)) roles.push_back(AgentRole::of(r));
            break;
        }
    }
    std::vector<RosterSlot> roster;
    for (std::size_t i = 0; i < roles.size(); ++i) roster.push_back({agent_id_for(panel_index, i), std::move(roles[i])});
    return roster;
}

PanelRecord Manager::run_panel(const std::vector<RosterSlot>& roster, const SoapNote& note,
                               const ProblemLabel& problem, int panel_index,
                               const std::optional<std::string>& prior_summary) {
    if (roster.empty()) throw InvalidArgument("panel roster is empty");
    PanelRecord panel;
    panel.panel_index = panel_index;
    panel.roster = roster;

    std::vector<AgentContext> agents;
    agents.reserve(roster.size());
    for (const auto& slot : roster) agents.emplace_back(slot.agent_id, slot.role, note, problem, panel_index, gateway_);

    auto to_round = [&](const std::vector<Verdict>& verdicts, int round_index) {
        Round round;
        for (std::size_t i = 0; i < verdicts.size(); ++i) {
            round.push_back({roster[i].agent_id, roster[i].role, panel_index, round_index, verdicts[i]});
        }
        return round;
    };
    auto consensus_of = [&](const Round& round) {
        std::vector<Choice> votes;
        for (const auto& t : round) votes.push_back(t.verdict.choice);
        return check_consensus(votes, config_.consensus_threshold);
    };

    panel.rounds.push_back(to_round(
        fan_out(agents, [&](AgentContext& a) { return a.analyze_independent(gateway_, settings_, prior_summary); }), 1));
    panel.consensus = consensus_of(panel.rounds.back());

    for (int round_index = 2; !panel.consensus && round_index <= config_.max_rounds; ++round_index) {
        const Round previous = panel.rounds.back();
        auto verdicts = fan_out(agents, [&](AgentContext& a) {
            std::vector<AgentTurn> peers;
            for (const auto& t : previous) {
                if (t.agent_id != a.agent_id()) peers.push_back(t);
            }
            return a.reconsider(gateway_, settings_, peers, round_index);
        });
        panel.rounds.push_back(to_round(verdicts, round_index));
        panel.consensus = consensus_of(panel.rounds.back());
    }
    return panel;
}

Manager::Handoff Manager::summarize_panel(const PanelRecord& panel, const ProblemLabel& problem,
                                          const std::string& note_id) {
    if (panel.consensus) throw InvalidArgument("summarize_panel called on a panel that reached consensus");
    if (panel.rounds.empty()) throw InvalidArgument("panel has no rounds to summarize");
    CompletionRequest req;
    req.messages = {{ChatMessage::Role::System, templates_.get("manager_system")},
                    {ChatMessage::Role::User,
                     render(templates_.get("manager_summary_user"),
                            {{"problem", problem.canonical_name},
                             {"panel_block", render_peer_block(templates_, panel.rounds.back())}})}};
    req.temperature = config_.summarizer_temperature;
    req.schema = SchemaId::Summary;
    req.max_output_tokens = config_.max_output_tokens;
    req.tag = manager_tag(note_id, problem, panel.panel_index, "handoff");
    try {
        return {gateway_.complete(req).summary(), false};
    } catch (const Error&) {
        return {extractive_summary(panel), true};
    }
}

Verdict Manager::aggregate_fallback(const std::vector<PanelRecord>& panels, const SoapNote& note,
                                    const ProblemLabel& problem) {
    if (static_cast<int>(panels.size()) != config_.max_panels) {
        throw InvalidArgument("fallback aggregation requires all " + std::to_string(config_.max_panels) + " panels");
    }
    History history(gateway_);
    history.append({ChatMessage::Role::System, templates_.get("manager_system")});
    for (const auto& p : panels) {
        if (p.consensus) throw InvalidArgument("fallback aggregation over a panel that reached consensus");
        if (p.rounds.empty()) throw InvalidArgument("panel has no rounds");
        history.append({ChatMessage::Role::User,
                        render(templates_.get("manager_fallback_panel"),
                               {{"panel_number", std::to_string(p.panel_index + 1)},
                                {"panel_block", render_peer_block(templates_, p.rounds.back())}})});
    }
    history.append({ChatMessage::Role::User, render(templates_.get("manager_fallback_user"),
                                                    {{"problem", problem.canonical_name}, {"note", so_text(note)}})});

    auto tag = manager_tag(note.note_id, problem, static_cast<int>(panels.size()) - 1, "fallback");
    history = maybe_compact(history, settings_.compaction, gateway_, tag).history;

    CompletionRequest req;
    req.messages = history.messages();
    req.temperature = config_.reasoning_temperature;
    req.schema = SchemaId::Verdict;
    req.max_output_tokens = config_.max_output_tokens;
    req.tag = tag;
    return gateway_.complete(req).verdict();
}

CaseTranscript Manager::run_case(const SoapNote& note, const ProblemLabel& problem) {
    if (!note.admissible()) throw CaseError("note '" + note.note_id + "' lacks a Subjective or Objective section");
    try {
        if (config_.composition_mode == CompositionMode::Baseline) {
            return baseline_zero_shot(note, problem, gateway_, settings_, config_.config_id(), config_.limits());
        }

        CaseTranscript tr;
        tr.note_id = note.note_id;
        tr.problem = problem.canonical_name;
        tr.config_id = config_.config_id();
        tr.limits = config_.limits();

        std::optional<std::string> prior_summary;
        for (int p = 0; p < config_.max_panels; ++p) {
            auto roster = assemble_team(note, problem, p);
            auto panel = run_panel(roster, note, problem, p, prior_summary);
            if (panel.consensus) {
                tr.final_choice = *panel.consensus;
                tr.decision_source = DecisionSource::Consensus;
                tr.panels.push_back(std::move(panel));
                return tr;
            }
            if (p + 1 < config_.max_panels) {
                auto handoff = summarize_panel(panel, problem, note.note_id);
                panel.handoff_summary = handoff.text;
                panel.handoff_extractive = handoff.extractive;
                prior_summary = std::move(handoff.text);
            }
            tr.panels.push_back(std::move(panel));
        }

        auto verdict = aggregate_fallback(tr.panels, note, problem);
        tr.final_choice = verdict.choice;
        tr.decision_source = DecisionSource::Fallback;
        tr.fallback = std::move(verdict);
        return tr;
    } catch (const ConfigError&) {
        throw;
    } catch (const CaseError&) {
        throw;
    } catch (const std::exception& e) {
        throw CaseError(e.what());
    }
}

}  // namespace clinmas
