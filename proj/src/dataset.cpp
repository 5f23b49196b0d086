#include "clinmas/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "clinmas/codec.hpp"
#include "clinmas/hashing.hpp"

namespace clinmas {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    return in;
}

bool blank_line(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

SoapNote note_from_json(const json& j) {
    if (!j.is_object()) throw DecodeError("record must be an object");
    SoapNote note;
    auto id = j.find("note_id");
    if (id == j.end() || !id->is_string() || id->get<std::string>().empty()) {
        throw DecodeError("note_id must be a non-empty string");
    }
    note.note_id = id->get<std::string>();

    auto lines = j.find("lines");
    if (lines == j.end() || !lines->is_array()) throw DecodeError("lines must be an array");
    std::vector<std::string> s, o, a, p;
    for (const auto& line : *lines) {
        if (!line.is_object() || !line.contains("label") || !line.contains("text") || !line["label"].is_string() ||
            !line["text"].is_string()) {
            throw DecodeError("each line needs string fields 'label' and 'text'");
        }
        const auto label = line["label"].get<std::string>();
        auto text = line["text"].get<std::string>();
        if (label == "S") s.push_back(std::move(text));
        else if (label == "O") o.push_back(std::move(text));
        else if (label == "A") a.push_back(std::move(text));
        else if (label == "P") p.push_back(std::move(text));
        else throw DecodeError("unknown section label '" + label + "'");
    }
    auto join = [](const std::vector<std::string>& parts) {
        std::string out;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (i) out.push_back('\n');
            out += parts[i];
        }
        return out;
    };
    note.subjective = join(s);
    note.objective = join(o);
    if (!a.empty()) note.assessment = join(a);
    if (!p.empty()) note.plan = join(p);

    auto gold = j.find("gold_problems");
    if (gold == j.end() || !gold->is_array()) throw DecodeError("gold_problems must be an array");
    for (const auto& g : *gold) {
        if (!g.is_string()) throw DecodeError("gold_problems must hold strings");
        note.gold_problems.insert(normalize_role(g.get<std::string>()));
    }
    return note;
}

}  // namespace

ParsedCorpus parse_notes(std::istream& in) {
    ParsedCorpus out;
    std::set<std::string> ids;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank_line(line)) continue;
        try {
            auto note = note_from_json(json::parse(line));
            if (!ids.insert(note.note_id).second) {
                out.issues.push_back({lineno, "duplicate note_id '" + note.note_id + "'"});
                continue;
            }
            out.notes.push_back(std::move(note));
        } catch (const std::exception& e) {
            out.issues.push_back({lineno, e.what()});
        }
    }
    return out;
}

ParsedCorpus parse_notes_file(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return parse_notes(in);
}

void write_notes(std::ostream& out, const std::vector<SoapNote>& notes) {
    for (const auto& n : notes) out << encode_note(n).dump() << '\n';
}

std::vector<ProblemLabel> parse_aliases(std::istream& in) {
    std::vector<ProblemLabel> labels;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank_line(line)) continue;
        try {
            auto j = json::parse(line);
            auto label = ProblemLabel::make(j.at("problem").get<std::string>(),
                                            j.at("aliases").get<std::vector<std::string>>());
            if (!seen.insert(label.canonical_name).second) throw InvalidArgument("duplicate problem");
            labels.push_back(std::move(label));
        } catch (const std::exception& e) {
            throw InvalidArgument("alias file line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return labels;
}

std::vector<ProblemLabel> parse_aliases_file(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return parse_aliases(in);
}

bool mentions_problem(std::string_view text, const ProblemLabel& problem) {
    const auto haystack = lower(text);
    for (const auto& alias : problem.aliases) {
        const auto needle = lower(alias);
        if (needle.empty()) continue;
        for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) {
            const bool left_ok = pos == 0 || !is_word_char(haystack[pos - 1]);
            const auto end = pos + needle.size();
            const bool right_ok = end == haystack.size() || !is_word_char(haystack[end]);
            if (left_ok && right_ok) return true;
        }
    }
    return false;
}

std::vector<TaskInstance> filter_implicit(const std::vector<SoapNote>& notes, const ProblemLabel& problem) {
    std::vector<TaskInstance> out;
    for (const auto& note : notes) {
        if (!note.admissible()) continue;
        if (note.gold_problems.count(problem.canonical_name)) {
            if (!mentions_problem(note.subjective + "\n" + note.objective, problem)) {
                out.push_back({note.note_id, problem.canonical_name, Choice::Yes});
            }
        } else {
            out.push_back({note.note_id, problem.canonical_name, Choice::No});
        }
    }
    return out;
}

json CorpusReport::to_json() const {
    json probs = json::array();
    for (const auto& p : problems) {
        probs.push_back({{"problem", p.problem},
                         {"positives", p.positives},
                         {"negatives", p.negatives},
                         {"excluded_explicit", p.excluded_explicit}});
    }
    return {{"notes_in", notes_in},
            {"notes_rejected", notes_rejected},
            {"unique_notes", unique_notes},
            {"unique_positive_notes", unique_positive_notes},
            {"problems", std::move(probs)},
            {"alias_hash", alias_hash},
            {"warnings", warnings}};
}

TaskSet build_task_set(const std::vector<SoapNote>& notes, const std::vector<ProblemLabel>& problems,
                       const std::vector<std::string>& curated) {
    TaskSet ts;
    ts.report.notes_in = static_cast<int>(notes.size());
    ts.report.notes_rejected =
        static_cast<int>(std::count_if(notes.begin(), notes.end(), [](const SoapNote& n) { return !n.admissible(); }));
    ts.report.alias_hash = alias_table_hash(problems);

    std::set<std::string> all_notes, positive_notes;
    std::set<std::pair<std::string, std::string>> keys;
    for (const auto& problem : problems) {
        if (std::find(curated.begin(), curated.end(), problem.canonical_name) == curated.end()) {
            throw InvalidArgument("problem '" + problem.canonical_name + "' is not in the curated list");
        }
        ProblemReport pr{problem.canonical_name, 0, 0, 0};
        for (const auto& note : notes) {
            if (note.admissible() && note.gold_problems.count(problem.canonical_name)) ++pr.excluded_explicit;
        }
        for (auto& inst : filter_implicit(notes, problem)) {
            if (!keys.emplace(inst.note_id, inst.problem).second) continue;
            all_notes.insert(inst.note_id);
            if (inst.gold == Choice::Yes) {
                ++pr.positives;
                positive_notes.insert(inst.note_id);
            } else {
                ++pr.negatives;
            }
            ts.instances.push_back(std::move(inst));
        }
        pr.excluded_explicit -= pr.positives;
        ts.report.problems.push_back(pr);
    }
    ts.report.unique_notes = static_cast<int>(all_notes.size());
    ts.report.unique_positive_notes = static_cast<int>(positive_notes.size());
    if (ts.instances.empty()) ts.report.warnings.emplace_back("task set is empty");
    for (const auto& pr : ts.report.problems) {
        if (pr.positives == 0) ts.report.warnings.push_back("no implicit positives for '" + pr.problem + "'");
    }
    return ts;
}

void write_task_set(std::ostream& out, const std::vector<TaskInstance>& instances) {
    for (const auto& i : instances) {
        out << json{{"note_id", i.note_id}, {"problem", i.problem}, {"gold", to_string(i.gold)}}.dump() << '\n';
    }
}

std::vector<TaskInstance> read_task_set(std::istream& in) {
    std::vector<TaskInstance> out;
    std::set<std::pair<std::string, std::string>> keys;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank_line(line)) continue;
        try {
            auto j = json::parse(line);
            TaskInstance t;
            t.note_id = j.at("note_id").get<std::string>();
            t.problem = j.at("problem").get<std::string>();
            auto gold = parse_choice(j.at("gold").get<std::string>());
            if (!gold) throw InvalidArgument("gold must be \"Yes\" or \"No\"");
            t.gold = *gold;
            if (!keys.emplace(t.note_id, t.problem).second) throw InvalidArgument("duplicate (note_id, problem)");
            out.push_back(std::move(t));
        } catch (const std::exception& e) {
            throw InvalidArgument("task set line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<TaskInstance> read_task_set_file(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return read_task_set(in);
}

const std::vector<std::string>& curated_problems() {
    static const std::vector<std::string> kCurated = {
        "congestive heart failure", "acute kidney injury",   "sepsis",
        "myocardial infarction",    "pneumonia",             "acute respiratory failure",
        "atrial fibrillation",      "chronic obstructive pulmonary disease",
        "pulmonary embolism",       "gastrointestinal bleeding",
        "cirrhosis",                "diabetic ketoacidosis", "stroke",
        "deep vein thrombosis",
    };
    return kCurated;
}

const std::vector<std::string>& default_problems() {
    static const std::vector<std::string> kDefault = {"congestive heart failure", "acute kidney injury", "sepsis"};
    return kDefault;
}

std::vector<ProblemLabel> default_aliases() {
    return {
        ProblemLabel::make("congestive heart failure", {"congestive heart failure", "chf", "heart failure", "hfref", "hfpef"}),
        ProblemLabel::make("acute kidney injury", {"acute kidney injury", "aki", "acute renal failure", "acute renal injury"}),
        ProblemLabel::make("sepsis", {"sepsis", "septic shock", "severe sepsis", "urosepsis"}),
        ProblemLabel::make("myocardial infarction", {"myocardial infarction", "mi", "stemi", "nstemi", "heart attack"}),
        ProblemLabel::make("pneumonia", {"pneumonia", "pna", "cap", "hcap", "vap"}),
        ProblemLabel::make("acute respiratory failure", {"acute respiratory failure", "respiratory failure"}),
        ProblemLabel::make("atrial fibrillation", {"atrial fibrillation", "afib", "a-fib", "af"}),
        ProblemLabel::make("chronic obstructive pulmonary disease", {"chronic obstructive pulmonary disease", "copd"}),
        ProblemLabel::make("pulmonary embolism", {"pulmonary embolism", "pe"}),
        ProblemLabel::make("gastrointestinal bleeding", {"gastrointestinal bleeding", "gi bleed", "gib", "gi bleeding"}),
        ProblemLabel::make("cirrhosis", {"cirrhosis"}),
        ProblemLabel::make("diabetic ketoacidosis", {"diabetic ketoacidosis", "dka"}),
        ProblemLabel::make("stroke", {"stroke", "cva", "cerebrovascular accident"}),
        ProblemLabel::make("deep vein thrombosis", {"deep vein thrombosis", "dvt"}),
    };
}

const ProblemLabel& find_label(const std::vector<ProblemLabel>& labels, const std::string& problem) {
    const auto key = normalize_role(problem);
    for (const auto& l : labels) {
        if (l.canonical_name == key) return l;
    }
    throw InvalidArgument("no alias entry for problem '" + problem + "'");
}

std::string alias_table_hash(const std::vector<ProblemLabel>& labels) {
    json j = json::array();
    for (const auto& l : labels) j.push_back({{"problem", l.canonical_name}, {"aliases", l.aliases}});
    return sha256_hex(j.dump());
}

}  // namespace clinmas
