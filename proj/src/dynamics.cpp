#include "clinmas/dynamics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "clinmas/evaluation.hpp"

namespace clinmas {

namespace {

std::optional<double> mean(long sum, int n) {
    if (n == 0) return std::nullopt;
    return static_cast<double>(sum) / n;
}

std::string csv_num(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream ss;
    ss << std::setprecision(17) << *v;
    return ss.str();
}

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

}  // namespace

std::vector<DebateStats> debate_stats(const std::vector<CaseTranscript>& transcripts,
                                      const std::vector<TaskInstance>& gold) {
    std::map<InstanceKey, Choice> labels;
    for (const auto& g : gold) labels[{g.note_id, g.problem}] = g.gold;

    struct Acc {
        int n_ok = 0, n_bad = 0;
        long rounds_ok = 0, rounds_bad = 0, panels_ok = 0, panels_bad = 0;
    };
    std::map<std::string, Acc> acc;
    std::vector<InstanceKey> missing;
    for (const auto& t : transcripts) {
        auto it = labels.find({t.note_id, t.problem});
        if (it == labels.end()) {
            missing.emplace_back(t.note_id, t.problem);
            continue;
        }
        auto& a = acc[t.problem];
        const long rounds = t.total_rounds();
        const long panels = static_cast<long>(t.panels.size());
        if (t.final_choice == it->second) {
            ++a.n_ok;
            a.rounds_ok += rounds;
            a.panels_ok += panels;
        } else {
            ++a.n_bad;
            a.rounds_bad += rounds;
            a.panels_bad += panels;
        }
    }
    if (!missing.empty()) {
        throw CoverageError(std::to_string(missing.size()) + " transcripts have no gold label", missing, {});
    }

    std::vector<DebateStats> out;
    for (const auto& [problem, a] : acc) {
        out.push_back({problem, a.n_ok, a.n_bad, mean(a.rounds_ok, a.n_ok), mean(a.rounds_bad, a.n_bad),
                       mean(a.panels_ok, a.n_ok), mean(a.panels_bad, a.n_bad)});
    }
    return out;
}

std::map<std::string, RecruitmentCounts> recruitment_counts(const std::vector<CaseTranscript>& transcripts) {
    std::map<std::string, RecruitmentCounts> out;
    for (const auto& t : transcripts) {
        auto& counts = out[t.problem];
        for (const auto& panel : t.panels) {
            for (const auto& slot : panel.roster) {
                if (slot.role.kind == RoleKind::Specialist) ++counts.by_role[slot.role.key()];
            }
        }
    }
    return out;
}

std::vector<PivotEvent> pivot_events(const std::vector<CaseTranscript>& transcripts) {
    std::vector<PivotEvent> out;
    for (const auto& t : transcripts) {
        for (const auto& panel : t.panels) {
            for (std::size_t slot = 0; slot < panel.roster.size(); ++slot) {
                if (panel.roster[slot].role.kind != RoleKind::Specialist) continue;
                std::optional<PivotEvent> last_change;
                for (std::size_t r = 1; r < panel.rounds.size(); ++r) {
                    if (slot >= panel.rounds[r].size() || slot >= panel.rounds[r - 1].size()) break;
                    const Choice before = panel.rounds[r - 1][slot].verdict.choice;
                    const Choice after = panel.rounds[r][slot].verdict.choice;
                    if (before != after) {
                        last_change = PivotEvent{t.note_id,
                                                 t.problem,
                                                 panel.roster[slot].agent_id,
                                                 panel.roster[slot].role.key(),
                                                 before,
                                                 after,
                                                 panel.rounds[r][slot].round_index,
                                                 false};
                    }
                }
                if (!last_change) continue;
                const Choice final_vote = panel.rounds.back()[slot].verdict.choice;
                if (final_vote != t.final_choice) continue;
                last_change->matched_final = true;
                out.push_back(std::move(*last_change));
            }
        }
    }
    return out;
}

double decisiveness_score(int pivots, int appearances) {
    if (appearances < 1) throw InvalidArgument("appearances must be at least 1");
    if (pivots < 0 || pivots > appearances) throw InvalidArgument("pivots must lie in [0, appearances]");
    return static_cast<double>(pivots) / appearances;
}

DecisivenessReport decisiveness(const std::vector<CaseTranscript>& transcripts, int min_appearances) {
    if (min_appearances < 1) throw InvalidArgument("min_appearances must be at least 1");
    std::map<std::pair<std::string, std::string>, DecisivenessScore> scores;
    for (const auto& [problem, counts] : recruitment_counts(transcripts)) {
        for (const auto& [role, n] : counts.by_role) scores[{problem, role}] = {problem, role, 0, n};
    }
    for (const auto& ev : pivot_events(transcripts)) ++scores[{ev.problem, ev.role}].pivots;

    DecisivenessReport out;
    for (auto& [_, s] : scores) {
        out.raw.push_back(s);
        if (s.appearances > min_appearances) out.ranked.push_back(s);
    }
    std::stable_sort(out.ranked.begin(), out.ranked.end(), [](const DecisivenessScore& a, const DecisivenessScore& b) {
        if (a.problem != b.problem) return a.problem < b.problem;
        return a.score() > b.score();
    });
    return out;
}

void write_debate_stats_csv(std::ostream& out, const std::vector<DebateStats>& stats) {
    out << "problem,correct_cases,incorrect_cases,avg_rounds_correct,avg_rounds_incorrect,avg_panels_correct,"
           "avg_panels_incorrect\n";
    for (const auto& s : stats) {
        out << quoted(s.problem) << ',' << s.correct_cases << ',' << s.incorrect_cases << ','
            << csv_num(s.avg_rounds_correct) << ',' << csv_num(s.avg_rounds_incorrect) << ','
            << csv_num(s.avg_panels_correct) << ',' << csv_num(s.avg_panels_incorrect) << '\n';
    }
}

void write_recruitment_csv(std::ostream& out, const std::map<std::string, RecruitmentCounts>& counts) {
    out << "role,problem,count\n";
    for (const auto& [problem, rc] : counts) {
        std::vector<std::pair<std::string, int>> rows(rc.by_role.begin(), rc.by_role.end());
        std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        for (const auto& [role, n] : rows) out << quoted(role) << ',' << quoted(problem) << ',' << n << '\n';
    }
}

void write_decisiveness_csv(std::ostream& out, const std::vector<DecisivenessScore>& scores) {
    out << "problem,role,p,n,decisiveness\n";
    for (const auto& s : scores) {
        out << quoted(s.problem) << ',' << quoted(s.role) << ',' << s.pivots << ',' << s.appearances << ','
            << csv_num(s.score()) << '\n';
    }
}

void write_pivots_csv(std::ostream& out, const std::vector<PivotEvent>& events) {
    out << "note_id,problem,agent_id,role,from_choice,to_choice,round_index,matched_final\n";
    for (const auto& e : events) {
        out << quoted(e.note_id) << ',' << quoted(e.problem) << ',' << e.agent_id << ',' << quoted(e.role) << ','
            << to_string(e.from_choice) << ',' << to_string(e.to_choice) << ',' << e.round_index << ','
            << (e.matched_final ? "true" : "false") << '\n';
    }
}

}  // namespace clinmas
