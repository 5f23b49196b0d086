#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clinmas/agents.hpp"
#include "clinmas/domain.hpp"
#include "clinmas/gateway.hpp"
#include "clinmas/prompts.hpp"

namespace clinmas {

/// A case could not be adjudicated; the batch records it and moves on.
class CaseError : public Error {
public:
    using Error::Error;
};

/// Pre-defined specialists for the static and hybrid team layouts, keyed by
/// canonical problem name. Throws ConfigError for problems without a list.
const std::vector<std::string>& static_roles_for(const std::string& problem);

/// The Manager: assembles teams, runs the round/panel state machine, writes
/// hand-off summaries, and aggregates when no panel converges.
class Manager {
public:
    Manager(Gateway& gateway, RunConfig config, const PromptTemplates& templates);

    /// Specialties for a panel, each with an expertise list. `k` empty means
    /// the model picks the count (capped at auto_team_cap). Names already in
    /// `taken` count as duplicates.
    std::vector<SpecialistRole> create_roles(const SoapNote& note, const ProblemLabel& problem, std::optional<int> k,
                                             int panel_index, const std::set<std::string>& taken = {});

    std::vector<RosterSlot> assemble_team(const SoapNote& note, const ProblemLabel& problem, int panel_index);

    PanelRecord run_panel(const std::vector<RosterSlot>& roster, const SoapNote& note, const ProblemLabel& problem,
                          int panel_index, const std::optional<std::string>& prior_summary);

    struct Handoff {
        std::string text;
        bool extractive = false;
    };
    Handoff summarize_panel(const PanelRecord& panel, const ProblemLabel& problem, const std::string& note_id);

    Verdict aggregate_fallback(const std::vector<PanelRecord>& panels, const SoapNote& note,
                               const ProblemLabel& problem);

    /// Full adjudication of one (note, problem). Throws CaseError on failure.
    CaseTranscript run_case(const SoapNote& note, const ProblemLabel& problem);

    const RunConfig& config() const noexcept { return config_; }

private:
    SpecialistRole with_expertise(const std::string& specialty, const SoapNote& note, const ProblemLabel& problem,
                                  int panel_index);
    CallTag manager_tag(const std::string& note_id, const ProblemLabel& problem, int panel_index,
                        const char* purpose) const;

    Gateway& gateway_;
    RunConfig config_;
    const PromptTemplates& templates_;
    AgentSettings settings_;
};

/// Concatenated final-round choices with the first sentence of each reasoning.
std::string extractive_summary(const PanelRecord& panel);

}  // namespace clinmas
