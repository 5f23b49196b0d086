#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clinmas/context_window.hpp"
#include "clinmas/domain.hpp"
#include "clinmas/gateway.hpp"
#include "clinmas/prompts.hpp"

namespace clinmas {

struct AgentSettings {
    const PromptTemplates* templates = nullptr;
    double reasoning_temperature = 0.5;
    int max_output_tokens = 1024;
    CompactionPolicy compaction;

    static AgentSettings from(const RunConfig& config, const PromptTemplates& templates);
};

/// One panelist's private state. The note text is captured from the
/// Subjective and Objective sections at construction; nothing else about the
/// note is retained.
class AgentContext {
public:
    AgentContext(std::string agent_id, AgentRole role, const SoapNote& note, ProblemLabel problem, int panel_index,
                 const Gateway& gateway);

    const std::string& agent_id() const noexcept { return agent_id_; }
    const AgentRole& role() const noexcept { return role_; }
    const ProblemLabel& problem() const noexcept { return problem_; }
    const std::string& note_so_text() const noexcept { return note_so_text_; }
    const std::string& note_id() const noexcept { return note_id_; }
    int panel_index() const noexcept { return panel_index_; }
    const History& history() const noexcept { return history_; }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    /// Round 1: independent analysis. `prior_summary` is a previous panel's
    /// hand-off, shown as a labeled block before the note.
    Verdict analyze_independent(Gateway& gateway, const AgentSettings& settings,
                                const std::optional<std::string>& prior_summary = std::nullopt);

    /// Rounds 2+: re-decide after seeing the peers' previous-round turns, in
    /// the order given (roster order).
    Verdict reconsider(Gateway& gateway, const AgentSettings& settings, const std::vector<AgentTurn>& peer_turns,
                       int round_index);

private:
    Verdict ask(Gateway& gateway, const AgentSettings& settings, std::string user_prompt, int round_index,
                const char* purpose);

    std::string agent_id_;
    AgentRole role_;
    ProblemLabel problem_;
    std::string note_so_text_;
    std::string note_id_;
    int panel_index_;
    History history_;
    std::vector<std::string> warnings_;
};

/// Text block listing each peer's role, choice, and reasoning.
std::string render_peer_block(const PromptTemplates& templates, const std::vector<AgentTurn>& peer_turns);

/// Single-call zero-shot chain-of-thought comparator.
CaseTranscript baseline_zero_shot(const SoapNote& note, const ProblemLabel& problem, Gateway& gateway,
                                  const AgentSettings& settings, const std::string& config_id,
                                  const ProtocolLimits& limits);

}  // namespace clinmas
