#include "clinmas/prompts.hpp"

#include <fstream>
#include <sstream>

#include "clinmas/domain.hpp"
#include "clinmas/hashing.hpp"

namespace clinmas {

namespace {

constexpr const char* kVerdictFormat =
    "Reply with only a JSON object of the form {\"reasoning\": \"<your step-by-step clinical reasoning>\", "
    "\"choice\": \"Yes\" or \"No\"}.";

std::map<std::string, std::string, std::less<>> builtin() {
    std::map<std::string, std::string, std::less<>> t;
    t["specialist_system"] =
        "You are a {role} taking part in a clinical consultation.\n"
        "Your key areas of expertise: {expertise}.\n"
        "Reason as if you were a human {role}: apply the diagnostic criteria, measurements, and clinical judgement "
        "your specialty would bring to this chart. Base every statement on the note you are given.";
    t["generic_system"] =
        "You are a physician taking part in a clinical consultation.\n"
        "Apply standard diagnostic criteria and clinical judgement to the chart you are given. Base every statement "
        "on the note.";
    t["baseline_system"] =
        "You are a physician reviewing a patient's chart. Apply standard diagnostic criteria and clinical judgement. "
        "Base every statement on the note you are given.";
    t["analyze_user"] =
        "Clinical question: does this patient have {problem}?\n\n"
        "{prior_summary}"
        "Patient note (Subjective and Objective sections only):\n"
        "{note}\n\n"
        "Analyze the note independently and decide whether the patient has {problem}. " +
        std::string(kVerdictFormat);
    t["prior_summary_block"] =
        "A previous consultation team reviewed this case and could not reach consensus. Summary of their final "
        "arguments:\n{summary}\n\n";
    t["reconsider_user"] =
        "Debate round {round}. The other members of your team answered as follows in the previous round:\n\n"
        "{peer_block}\n"
        "Consider your peers' arguments against your own analysis of the note. Refine your reasoning and state "
        "whether the patient has {problem}; you may keep or change your previous choice. " +
        std::string(kVerdictFormat);
    t["no_peers"] = "(No other team members.)\n";
    t["peer_entry"] = "- {peer_role} ({peer_id}) answered \"{peer_choice}\".\n  Reasoning: {peer_reasoning}\n";
    t["baseline_user"] =
        "Clinical question: does this patient have {problem}?\n\n"
        "Patient note (Subjective and Objective sections only):\n"
        "{note}\n\n"
        "Let's think step by step about the evidence for and against {problem}, then decide. " +
        std::string(kVerdictFormat);
    t["manager_system"] =
        "You are the Manager of a clinical consultation team. You choose which medical specialists should review "
        "a case, summarize their debates, and make the final call when they cannot agree. You do not take part in "
        "the debate yourself.";
    t["manager_roles_user"] =
        "Clinical question: does this patient have {problem}?\n\n"
        "Patient note (Subjective and Objective sections only):\n"
        "{note}\n\n"
        "Identify {team_size} distinct medical specialties whose expertise is most relevant to answering this "
        "question for this patient. Reply with only a JSON object {\"specialties\": [\"<specialty>\", ...]}.";
    t["manager_roles_retry"] =
        "Your list was not usable: {problem_with_list}. Provide {team_size} distinct specialties. Reply with only a "
        "JSON object {\"specialties\": [\"<specialty>\", ...]}.";
    t["manager_expertise_user"] =
        "A {role} will join the team assessing whether the patient below has {problem}.\n\n"
        "Patient note (Subjective and Objective sections only):\n"
        "{note}\n\n"
        "Generate a concise list of the key expertise areas this {role} should draw on. Reply with only a JSON "
        "object {\"expertise\": [\"<area>\", ...]}.";
    t["manager_summary_user"] =
        "The team assessing whether the patient has {problem} did not reach consensus. Their final-round "
        "positions:\n\n{panel_block}\n"
        "Summarize the team's final arguments for a new team, keeping the key evidence cited on each side. Reply "
        "with only a JSON object {\"summary\": \"...\"}.";
    t["manager_fallback_panel"] = "Team {panel_number} final-round positions:\n\n{panel_block}";
    t["manager_fallback_user"] =
        "No team reached consensus on whether the patient has {problem}. Review every team's arguments above "
        "together with the note below and give a single, definitive answer.\n\n"
        "Patient note (Subjective and Objective sections only):\n"
        "{note}\n\n" +
        std::string(kVerdictFormat);
    return t;
}

}  // namespace

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates p;
    p.templates_ = builtin();
    return p;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
    PromptTemplates p = defaults();
    if (!std::filesystem::is_directory(dir)) throw ConfigError("template directory not found: " + dir.string());
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        const auto name = entry.path().stem().string();
        auto it = p.templates_.find(name);
        if (it == p.templates_.end()) throw ConfigError("unknown prompt template '" + name + "' in " + dir.string());
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        it->second = ss.str();
    }
    return p;
}

const std::string& PromptTemplates::get(std::string_view name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw ConfigError("no prompt template named '" + std::string(name) + "'");
    return it->second;
}

void PromptTemplates::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& [name, text] : templates_) {
        std::ofstream out(dir / (name + ".txt"), std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw Error("cannot write template " + name);
    }
}

std::string PromptTemplates::hash() const {
    std::string blob;
    for (const auto& [name, text] : templates_) {
        blob += name;
        blob.push_back('\0');
        blob += text;
        blob.push_back('\0');
    }
    return sha256_hex(blob);
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                auto it = values.find(tmpl.substr(i + 1, close - i - 1));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

}  // namespace clinmas
