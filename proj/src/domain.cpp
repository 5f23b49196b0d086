#include "clinmas/domain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "clinmas/codec.hpp"
#include "clinmas/hashing.hpp"

namespace clinmas {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string_view to_string(Choice c) noexcept { return c == Choice::Yes ? "Yes" : "No"; }

std::optional<Choice> parse_choice(std::string_view s) noexcept {
    if (s == "Yes") return Choice::Yes;
    if (s == "No") return Choice::No;
    return std::nullopt;
}

std::string normalize_role(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (char c : raw) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (out.empty()) throw InvalidArgument("role name is empty");
    return out;
}

std::string so_text(const SoapNote& note) {
    return "Subjective:\n" + note.subjective + "\n\nObjective:\n" + note.objective;
}

ProblemLabel ProblemLabel::make(std::string_view canonical, std::vector<std::string> aliases) {
    ProblemLabel label;
    label.canonical_name = normalize_role(canonical);
    for (auto& a : aliases) {
        if (std::all_of(a.begin(), a.end(), is_space)) continue;
        label.aliases.push_back(std::move(a));
    }
    auto has_canonical = std::any_of(label.aliases.begin(), label.aliases.end(), [&](const std::string& a) {
        return normalize_role(a) == label.canonical_name;
    });
    if (!has_canonical) label.aliases.insert(label.aliases.begin(), label.canonical_name);
    return label;
}

SpecialistRole SpecialistRole::make(std::string_view specialty, std::vector<std::string> expertise) {
    SpecialistRole r;
    r.normalized_specialty = normalize_role(specialty);
    auto first = std::find_if_not(specialty.begin(), specialty.end(), is_space);
    auto last = std::find_if_not(specialty.rbegin(), specialty.rend(), is_space).base();
    r.specialty = std::string(first, last);
    r.expertise = std::move(expertise);
    return r;
}

std::string AgentRole::key() const {
    switch (kind) {
        case RoleKind::Specialist: return specialist.normalized_specialty;
        case RoleKind::Generic: return "generic";
        case RoleKind::Baseline: return "baseline";
    }
    return {};
}

std::string AgentRole::display() const {
    switch (kind) {
        case RoleKind::Specialist: return specialist.specialty;
        case RoleKind::Generic: return "Clinician";
        case RoleKind::Baseline: return "Clinician";
    }
    return {};
}

std::string_view to_string(DecisionSource d) noexcept {
    switch (d) {
        case DecisionSource::Consensus: return "consensus";
        case DecisionSource::Fallback: return "fallback";
        case DecisionSource::Baseline: return "baseline";
    }
    return "consensus";
}

std::optional<DecisionSource> parse_decision_source(std::string_view s) noexcept {
    if (s == "consensus") return DecisionSource::Consensus;
    if (s == "fallback") return DecisionSource::Fallback;
    if (s == "baseline") return DecisionSource::Baseline;
    return std::nullopt;
}

std::string_view to_string(CompositionMode m) noexcept {
    switch (m) {
        case CompositionMode::Baseline: return "baseline";
        case CompositionMode::Dynamic: return "dynamic";
        case CompositionMode::Generic: return "generic";
        case CompositionMode::StaticDynamic: return "static_dynamic";
        case CompositionMode::Hybrid: return "hybrid";
    }
    return "dynamic";
}

std::optional<CompositionMode> parse_composition_mode(std::string_view s) noexcept {
    if (s == "baseline") return CompositionMode::Baseline;
    if (s == "dynamic") return CompositionMode::Dynamic;
    if (s == "generic") return CompositionMode::Generic;
    if (s == "static_dynamic") return CompositionMode::StaticDynamic;
    if (s == "hybrid") return CompositionMode::Hybrid;
    return std::nullopt;
}

int CaseTranscript::total_rounds() const noexcept {
    int n = 0;
    for (const auto& p : panels) n += static_cast<int>(p.rounds.size());
    return n;
}

void RunConfig::validate() const {
    if (team_size && *team_size < 1) throw ConfigError("team_size must be positive or AUTO");
    if (!team_size && composition_mode == CompositionMode::Generic) {
        throw ConfigError("team_size AUTO needs dynamic roles; generic mode requires a fixed size");
    }
    if (auto_team_cap < 1) throw ConfigError("auto_team_cap must be positive");
    if (!(consensus_threshold > 0.5 && consensus_threshold <= 1.0)) {
        throw ConfigError("consensus_threshold must lie in (0.5, 1.0]");
    }
    if (max_rounds < 1) throw ConfigError("max_rounds must be positive");
    if (max_panels < 1) throw ConfigError("max_panels must be positive");
    if (reasoning_temperature < 0 || summarizer_temperature < 0) {
        throw ConfigError("temperatures must be non-negative");
    }
    if (context_limit_tokens < 1) throw ConfigError("context_limit_tokens must be positive");
    if (!(compaction_threshold > 0.0 && compaction_threshold < 1.0)) {
        throw ConfigError("compaction_threshold must lie in (0, 1)");
    }
    if (max_concurrent_requests < 1) throw ConfigError("max_concurrent_requests must be positive");
    if (retry_limit < 1) throw ConfigError("retry_limit must be at least 1");
    if (max_output_tokens < 1) throw ConfigError("max_output_tokens must be positive");
    if (!(request_timeout_seconds > 0)) throw ConfigError("request_timeout_seconds must be positive");
}

std::string RunConfig::config_id() const {
    if (!name.empty()) return name;
    RunConfig anonymous = *this;
    anonymous.name.clear();
    return std::string(to_string(composition_mode)) + "-" + sha256_hex(encode_config(anonymous).dump()).substr(0, 12);
}

std::optional<Choice> check_consensus(const std::vector<Choice>& votes, double threshold) {
    if (votes.empty()) throw InvalidArgument("consensus check needs at least one vote");
    const auto n = static_cast<double>(votes.size());
    const auto yes = static_cast<double>(std::count(votes.begin(), votes.end(), Choice::Yes));
    // Tolerance absorbs representation error in thresholds such as 0.8 * 5.
    constexpr double kEps = 1e-9;
    if (yes >= threshold * n - kEps) return Choice::Yes;
    if (n - yes >= threshold * n - kEps) return Choice::No;
    return std::nullopt;
}

DecisionSource derive_decision_source(const CaseTranscript& t) {
    if (t.panels.size() == 1 && t.panels[0].roster.size() == 1 &&
        t.panels[0].roster[0].role.kind == RoleKind::Baseline) {
        return DecisionSource::Baseline;
    }
    if (!t.panels.empty() && t.panels.back().consensus) return DecisionSource::Consensus;
    return DecisionSource::Fallback;
}

std::vector<std::string> check_transcript(const CaseTranscript& t) {
    std::vector<std::string> bad;
    const auto& lim = t.limits;
    auto where = [](std::size_t p, std::size_t r) {
        return "panel " + std::to_string(p) + " round " + std::to_string(r + 1) + ": ";
    };

    if (t.note_id.empty()) bad.emplace_back("note_id is empty");
    if (t.problem.empty()) bad.emplace_back("problem is empty");
    if (t.panels.empty() || static_cast<int>(t.panels.size()) > lim.max_panels) {
        bad.emplace_back("panel count " + std::to_string(t.panels.size()) + " outside [1, " +
                         std::to_string(lim.max_panels) + "]");
    }

    const auto source = derive_decision_source(t);
    if (source != t.decision_source) {
        bad.emplace_back("decision_source is " + std::string(to_string(t.decision_source)) +
                         " but structure implies " + std::string(to_string(source)));
    }

    for (std::size_t p = 0; p < t.panels.size(); ++p) {
        const auto& panel = t.panels[p];
        const auto prefix = "panel " + std::to_string(p) + ": ";
        if (panel.panel_index != static_cast<int>(p)) bad.push_back(prefix + "panel_index out of sequence");
        if (panel.roster.empty()) bad.push_back(prefix + "empty roster");
        if (panel.rounds.empty() || static_cast<int>(panel.rounds.size()) > lim.max_rounds) {
            bad.push_back(prefix + "round count " + std::to_string(panel.rounds.size()) + " outside [1, " +
                          std::to_string(lim.max_rounds) + "]");
        }
        for (std::size_t r = 0; r < panel.rounds.size(); ++r) {
            const auto& round = panel.rounds[r];
            if (round.size() != panel.roster.size()) {
                bad.push_back(where(p, r) + "turn count differs from roster size");
                continue;
            }
            for (std::size_t i = 0; i < round.size(); ++i) {
                const auto& turn = round[i];
                if (turn.agent_id != panel.roster[i].agent_id || !(turn.role == panel.roster[i].role)) {
                    bad.push_back(where(p, r) + "turn " + std::to_string(i) + " does not match roster slot");
                }
                if (turn.panel_index != static_cast<int>(p) || turn.round_index != static_cast<int>(r) + 1) {
                    bad.push_back(where(p, r) + "turn " + std::to_string(i) + " has wrong indices");
                }
                if (turn.verdict.reasoning.empty()) {
                    bad.push_back(where(p, r) + "turn " + std::to_string(i) + " has empty reasoning");
                }
            }
        }

        if (source == DecisionSource::Baseline || panel.rounds.empty()) continue;

        // Consensus is checked after every round and short-circuits the loop.
        for (std::size_t r = 0; r < panel.rounds.size(); ++r) {
            std::vector<Choice> votes;
            for (const auto& turn : panel.rounds[r]) votes.push_back(turn.verdict.choice);
            if (votes.empty()) break;
            auto c = check_consensus(votes, lim.consensus_threshold);
            bool last = r + 1 == panel.rounds.size();
            if (!last && c) bad.push_back(where(p, r) + "consensus reached but debate continued");
            if (last && c != panel.consensus) bad.push_back(prefix + "consensus field disagrees with final-round votes");
        }
        if (!panel.consensus && static_cast<int>(panel.rounds.size()) != lim.max_rounds) {
            bad.push_back(prefix + "panel ended without consensus before max_rounds");
        }
        bool last_panel = p + 1 == t.panels.size();
        if (!last_panel && panel.consensus) bad.push_back(prefix + "consensus reached but a new panel was assembled");
    }

    switch (source) {
        case DecisionSource::Baseline: {
            const auto& panel = t.panels[0];
            if (panel.rounds.size() != 1 || panel.rounds[0].size() != 1) {
                bad.emplace_back("baseline transcript must hold exactly one turn");
            } else if (panel.rounds[0][0].verdict.choice != t.final_choice) {
                bad.emplace_back("baseline final_choice differs from its single turn");
            }
            if (panel.consensus) bad.emplace_back("baseline panel must not carry consensus");
            break;
        }
        case DecisionSource::Consensus:
            if (t.final_choice != *t.panels.back().consensus) {
                bad.emplace_back("final_choice differs from the last panel's consensus");
            }
            if (t.fallback) bad.emplace_back("consensus transcript carries a fallback verdict");
            break;
        case DecisionSource::Fallback:
            if (static_cast<int>(t.panels.size()) != lim.max_panels) {
                bad.emplace_back("fallback used before max_panels panels were tried");
            }
            if (!t.fallback) {
                bad.emplace_back("fallback transcript lacks the aggregation verdict");
            } else if (t.fallback->choice != t.final_choice) {
                bad.emplace_back("final_choice differs from the fallback verdict");
            }
            break;
    }
    return bad;
}

}  // namespace clinmas
