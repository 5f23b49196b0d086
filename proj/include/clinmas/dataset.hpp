#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "clinmas/domain.hpp"

namespace clinmas {

struct TaskInstance {
    std::string note_id;
    std::string problem;
    Choice gold = Choice::No;

    auto operator<=>(const TaskInstance&) const = default;
};

struct ParseIssue {
    int line = 0;
    std::string message;
};

struct ParsedCorpus {
    std::vector<SoapNote> notes;
    std::vector<ParseIssue> issues;  // malformed records and duplicate ids
};

/// Reads the line-delimited corpus format:
///   {"note_id": "...", "lines": [{"label": "S|O|A|P", "text": "..."}], "gold_problems": ["..."]}
/// Lines of each label are joined with '\n' in file order. Gold problem names
/// are normalized (lowercase, collapsed whitespace).
ParsedCorpus parse_notes(std::istream& in);
ParsedCorpus parse_notes_file(const std::filesystem::path& path);

/// Writes notes in the corpus format; parse_notes inverts it.
void write_notes(std::ostream& out, const std::vector<SoapNote>& notes);

/// Alias file: one {"problem": "...", "aliases": ["..."]} per line.
std::vector<ProblemLabel> parse_aliases(std::istream& in);
std::vector<ProblemLabel> parse_aliases_file(const std::filesystem::path& path);

/// Case-insensitive match of any alias, bounded on both sides by a
/// non-alphanumeric character or the ends of the text.
bool mentions_problem(std::string_view text, const ProblemLabel& problem);

/// Positives: problem is gold and never mentioned in S+O. Negatives: problem
/// is not gold. Positives with an explicit mention are dropped. Notes that are
/// not admissible are skipped.
std::vector<TaskInstance> filter_implicit(const std::vector<SoapNote>& notes, const ProblemLabel& problem);

struct ProblemReport {
    std::string problem;
    int positives = 0;
    int negatives = 0;
    int excluded_explicit = 0;
};

struct CorpusReport {
    int notes_in = 0;
    int notes_rejected = 0;  // not admissible
    int unique_notes = 0;    // notes contributing at least one instance
    int unique_positive_notes = 0;
    std::vector<ProblemReport> problems;
    std::string alias_hash;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

struct TaskSet {
    std::vector<TaskInstance> instances;
    CorpusReport report;
};

/// Union of filter_implicit over the requested problems. Every problem must
/// be in `curated`; an empty result is reported as a warning.
TaskSet build_task_set(const std::vector<SoapNote>& notes, const std::vector<ProblemLabel>& problems,
                       const std::vector<std::string>& curated);

/// Task-set file: one {"note_id", "problem", "gold"} per line.
void write_task_set(std::ostream& out, const std::vector<TaskInstance>& instances);
std::vector<TaskInstance> read_task_set(std::istream& in);
std::vector<TaskInstance> read_task_set_file(const std::filesystem::path& path);

/// The fourteen curated diagnoses shipped with the engine.
const std::vector<std::string>& curated_problems();

/// The three problems exercised by default.
const std::vector<std::string>& default_problems();

/// Built-in alias table for the curated problems.
std::vector<ProblemLabel> default_aliases();

/// Looks up a problem's label, throwing InvalidArgument when absent.
const ProblemLabel& find_label(const std::vector<ProblemLabel>& labels, const std::string& problem);

std::string alias_table_hash(const std::vector<ProblemLabel>& labels);

}  // namespace clinmas
