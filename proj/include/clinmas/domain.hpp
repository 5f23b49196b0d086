#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clinmas {

// Base for every error the engine raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

enum class Choice : std::uint8_t { No = 0, Yes = 1 };

std::string_view to_string(Choice c) noexcept;
std::optional<Choice> parse_choice(std::string_view s) noexcept;

/// Lowercase, strip, and collapse internal whitespace runs to one space.
/// Throws InvalidArgument on empty (or all-whitespace) input.
std::string normalize_role(std::string_view raw);

struct SoapNote {
    std::string note_id;
    std::string subjective;
    std::string objective;
    // Stored for audit only. Prompt assembly goes through so_text(), which
    // never reads these two members.
    std::optional<std::string> assessment;
    std::optional<std::string> plan;
    std::set<std::string> gold_problems;

    /// True when the note can be admitted to a task set.
    bool admissible() const noexcept {
        return !note_id.empty() && !subjective.empty() && !objective.empty();
    }

    bool operator==(const SoapNote&) const = default;
};

/// The only agent-visible rendering of a note: Subjective and Objective.
std::string so_text(const SoapNote& note);

struct ProblemLabel {
    std::string canonical_name;
    std::vector<std::string> aliases;

    /// Builds a label, lowercasing the canonical name and making sure it is
    /// among the aliases.
    static ProblemLabel make(std::string_view canonical, std::vector<std::string> aliases = {});

    bool operator==(const ProblemLabel&) const = default;
};

struct Verdict {
    Choice choice = Choice::No;
    std::string reasoning;

    bool operator==(const Verdict&) const = default;
};

struct SpecialistRole {
    std::string specialty;
    std::string normalized_specialty;
    std::vector<std::string> expertise;

    static SpecialistRole make(std::string_view specialty, std::vector<std::string> expertise = {});

    bool operator==(const SpecialistRole&) const = default;
};

enum class RoleKind : std::uint8_t { Specialist, Generic, Baseline };

struct AgentRole {
    RoleKind kind = RoleKind::Generic;
    SpecialistRole specialist;  // meaningful only for RoleKind::Specialist

    static AgentRole generic() { return {RoleKind::Generic, {}}; }
    static AgentRole baseline() { return {RoleKind::Baseline, {}}; }
    static AgentRole of(SpecialistRole r) { return {RoleKind::Specialist, std::move(r)}; }

    /// Normalized specialty, or the sentinel names "generic" / "baseline".
    std::string key() const;
    std::string display() const;

    bool operator==(const AgentRole&) const = default;
};

struct AgentTurn {
    std::string agent_id;
    AgentRole role;
    int panel_index = 0;  // 0-based
    int round_index = 1;  // 1-based
    Verdict verdict;

    bool operator==(const AgentTurn&) const = default;
};

struct RosterSlot {
    std::string agent_id;
    AgentRole role;

    bool operator==(const RosterSlot&) const = default;
};

using Round = std::vector<AgentTurn>;

struct PanelRecord {
    int panel_index = 0;
    std::vector<RosterSlot> roster;
    std::vector<Round> rounds;
    std::optional<Choice> consensus;
    std::optional<std::string> handoff_summary;
    bool handoff_extractive = false;  // summary came from the extractive fallback

    bool operator==(const PanelRecord&) const = default;
};

enum class DecisionSource : std::uint8_t { Consensus, Fallback, Baseline };

std::string_view to_string(DecisionSource d) noexcept;
std::optional<DecisionSource> parse_decision_source(std::string_view s) noexcept;

/// Protocol limits a transcript was produced under. Carried on the record so
/// its invariants can be checked without the originating config.
struct ProtocolLimits {
    double consensus_threshold = 0.8;
    int max_rounds = 3;
    int max_panels = 3;

    bool operator==(const ProtocolLimits&) const = default;
};

struct CaseTranscript {
    std::string note_id;
    std::string problem;
    std::string config_id;
    ProtocolLimits limits;
    std::vector<PanelRecord> panels;
    Choice final_choice = Choice::No;
    DecisionSource decision_source = DecisionSource::Consensus;
    std::optional<Verdict> fallback;  // the Manager's aggregation verdict

    /// Number of debate rounds summed over all panels.
    int total_rounds() const noexcept;

    bool operator==(const CaseTranscript&) const = default;
};

enum class CompositionMode : std::uint8_t { Baseline, Dynamic, Generic, StaticDynamic, Hybrid };

std::string_view to_string(CompositionMode m) noexcept;
std::optional<CompositionMode> parse_composition_mode(std::string_view s) noexcept;

struct RunConfig {
    std::string name;
    CompositionMode composition_mode = CompositionMode::Dynamic;
    std::optional<int> team_size = 5;  // nullopt means AUTO
    int auto_team_cap = 8;
    double consensus_threshold = 0.8;
    int max_rounds = 3;
    int max_panels = 3;
    double reasoning_temperature = 0.5;
    double summarizer_temperature = 0.1;
    int context_limit_tokens = 8192;
    double compaction_threshold = 0.7;
    int max_concurrent_requests = 8;
    int retry_limit = 3;
    int max_output_tokens = 1024;
    double request_timeout_seconds = 120.0;
    std::string template_dir;  // empty: built-in templates

    ProtocolLimits limits() const noexcept {
        return {consensus_threshold, max_rounds, max_panels};
    }

    /// Throws ConfigError when a field is out of range.
    void validate() const;

    /// Stable identifier: the explicit name, or mode plus a content hash.
    std::string config_id() const;

    bool operator==(const RunConfig&) const = default;
};

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t tn = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    std::int64_t total() const noexcept { return tp + tn + fp + fn; }

    bool operator==(const ConfusionCounts&) const = default;
};

/// Returns the choice reaching the threshold fraction of votes, if any.
/// Throws InvalidArgument on an empty vote list.
std::optional<Choice> check_consensus(const std::vector<Choice>& votes, double threshold);

/// The decision source implied by a transcript's structure.
/// Baseline transcripts are recognised by their single BASELINE turn.
DecisionSource derive_decision_source(const CaseTranscript& t);

/// Lists every violated transcript invariant; empty means the record is valid.
std::vector<std::string> check_transcript(const CaseTranscript& t);

}  // namespace clinmas
