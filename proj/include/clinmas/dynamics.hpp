#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "clinmas/dataset.hpp"
#include "clinmas/domain.hpp"
#include "clinmas/evaluation.hpp"

namespace clinmas {

struct PivotEvent {
    std::string note_id;
    std::string problem;
    std::string agent_id;
    std::string role;  // normalized
    Choice from_choice = Choice::No;
    Choice to_choice = Choice::No;
    int round_index = 0;  // round in which the landing vote was cast
    bool matched_final = false;
};

struct DebateStats {
    std::string problem;
    int correct_cases = 0;
    int incorrect_cases = 0;
    std::optional<double> avg_rounds_correct;
    std::optional<double> avg_rounds_incorrect;
    std::optional<double> avg_panels_correct;
    std::optional<double> avg_panels_incorrect;
};

/// Rounds per case are summed over its panels. Groups without cases stay
/// empty. Throws CoverageError when a transcript has no gold label.
std::vector<DebateStats> debate_stats(const std::vector<CaseTranscript>& transcripts,
                                      const std::vector<TaskInstance>& gold);

struct RecruitmentCounts {
    std::map<std::string, int> by_role;  // normalized role -> appearances
    int unique_roles() const noexcept { return static_cast<int>(by_role.size()); }
};

/// One appearance per (case, panel, roster slot) holding a specialist.
std::map<std::string, RecruitmentCounts> recruitment_counts(const std::vector<CaseTranscript>& transcripts);

/// Vote changes within each panel whose landing vote matches the case's final
/// choice. At most one event per appearance: the last change in the panel,
/// reported only if the agent's final vote in that panel matches.
std::vector<PivotEvent> pivot_events(const std::vector<CaseTranscript>& transcripts);

struct DecisivenessScore {
    std::string problem;
    std::string role;
    int pivots = 0;
    int appearances = 0;
    double score() const noexcept { return appearances ? static_cast<double>(pivots) / appearances : 0.0; }
};

struct DecisivenessReport {
    std::vector<DecisivenessScore> raw;     // every specialist role
    std::vector<DecisivenessScore> ranked;  // appearances > min_appearances, best first per problem
};

DecisivenessReport decisiveness(const std::vector<CaseTranscript>& transcripts, int min_appearances = 100);

/// pivots / appearances. Throws InvalidArgument for appearances < 1 or
/// pivots outside [0, appearances].
double decisiveness_score(int pivots, int appearances);

void write_debate_stats_csv(std::ostream& out, const std::vector<DebateStats>& stats);
void write_recruitment_csv(std::ostream& out, const std::map<std::string, RecruitmentCounts>& counts);
void write_decisiveness_csv(std::ostream& out, const std::vector<DecisivenessScore>& scores);
void write_pivots_csv(std::ostream& out, const std::vector<PivotEvent>& events);

}  // namespace clinmas
