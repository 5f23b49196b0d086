#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clinmas/codec.hpp"
#include "clinmas/dataset.hpp"
#include "clinmas/domain.hpp"
#include "clinmas/gateway.hpp"
#include "clinmas/runner.hpp"
#include "clinmas/scripted_backend.hpp"

namespace clinmas::testing {

inline std::filesystem::path source_dir() { return CLINMAS_SOURCE_DIR; }
inline std::filesystem::path fixture(const std::string& rel) { return source_dir() / "tests" / "fixtures" / rel; }

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("clinmas-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline SoapNote make_note(std::string id, std::string s, std::string o, std::optional<std::string> a = std::nullopt,
                          std::optional<std::string> p = std::nullopt, std::set<std::string> gold = {}) {
    SoapNote n;
    n.note_id = std::move(id);
    n.subjective = std::move(s);
    n.objective = std::move(o);
    n.assessment = std::move(a);
    n.plan = std::move(p);
    n.gold_problems = std::move(gold);
    return n;
}

inline nlohmann::json verdict_json(Choice c, const std::string& reasoning = "Reasoned from the findings.") {
    return {{"reasoning", reasoning}, {"choice", std::string(to_string(c))}};
}

// A scripted backend plus a gateway over it with retries that never sleep.
struct Scripted {
    std::shared_ptr<ScriptedBackend> backend = std::make_shared<ScriptedBackend>();
    std::shared_ptr<CallLog> log = std::make_shared<CallLog>(true);
    std::unique_ptr<Gateway> gateway;

    explicit Scripted(int retry_limit = 3, int max_concurrent = 8) {
        GatewayOptions o;
        o.retry_limit = retry_limit;
        o.max_concurrent_requests = max_concurrent;
        o.backoff_base = std::chrono::milliseconds(0);
        gateway = std::make_unique<Gateway>(backend, o, log);
    }

    void add(const nlohmann::json& entry) { backend->add(parse_script_entry(entry)); }

    // Manager replies shared by most orchestrator tests.
    void add_manager_defaults(const std::vector<std::string>& roles) {
        add({{"role_key", "manager"}, {"schema_id", "role_list"}, {"response", {{"specialties", roles}}}});
        add({{"role_key", "manager"}, {"schema_id", "expertise_list"},
             {"response", {{"expertise", {"bedside assessment", "laboratory review"}}}}});
        add({{"role_key", "manager"}, {"schema_id", "summary"},
             {"response", {{"summary", "Prior panel split without agreement."}}}});
    }

    // Votes for every agent of panel `panel` in round `round`.
    void add_round(int panel, int round, const std::vector<Choice>& votes) {
        for (std::size_t i = 0; i < votes.size(); ++i) {
            add({{"agent_id", "p" + std::to_string(panel) + "-a" + std::to_string(i)},
                 {"round", round},
                 {"schema_id", "verdict"},
                 {"response", verdict_json(votes[i], "Slot " + std::to_string(i) + " round " + std::to_string(round) +
                                                         " vote " + std::string(to_string(votes[i])) + ".")}});
        }
    }

    std::vector<nlohmann::json> calls() const { return log->entries(); }

    std::vector<nlohmann::json> calls_where(const std::string& key, const nlohmann::json& value) const {
        std::vector<nlohmann::json> out;
        for (auto& e : log->entries()) {
            if (e.contains(key) && e[key] == value) out.push_back(e);
        }
        return out;
    }
};

inline const std::vector<Choice>& votes(const char* pattern) {
    static thread_local std::vector<Choice> v;
    v.clear();
    for (const char* p = pattern; *p; ++p) v.push_back(*p == 'Y' ? Choice::Yes : Choice::No);
    return v;
}

inline std::string random_text(std::mt19937& rng, int max_len = 24) {
    static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz ABCXYZ.,\"\\\n\t{}";
    std::uniform_int_distribution<int> len(0, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) s.push_back(alphabet[pick(rng)]);
    return s;
}

inline AgentRole random_role(std::mt19937& rng) {
    switch (rng() % 3) {
        case 0: return AgentRole::generic();
        case 1: return AgentRole::baseline();
        default: {
            std::vector<std::string> expertise;
            for (unsigned i = rng() % 4; i > 0; --i) expertise.push_back(random_text(rng));
            return AgentRole::of(SpecialistRole::make("Spec " + random_text(rng, 10) + "x", expertise));
        }
    }
}

// Random transcript that need not satisfy the protocol invariants; used for
// encoding round trips.
inline CaseTranscript random_transcript(std::mt19937& rng) {
    auto coin = [&] { return rng() % 2 == 0; };
    auto choice = [&] { return coin() ? Choice::Yes : Choice::No; };
    CaseTranscript t;
    t.note_id = "n" + random_text(rng, 8);
    t.problem = random_text(rng, 12);
    t.config_id = random_text(rng, 12);
    t.limits = {0.5 + (rng() % 50) / 100.0, 1 + static_cast<int>(rng() % 4), 1 + static_cast<int>(rng() % 4)};
    for (unsigned p = 0, np = 1 + rng() % 3; p < np; ++p) {
        PanelRecord panel;
        panel.panel_index = static_cast<int>(p);
        const unsigned size = 1 + rng() % 5;
        for (unsigned s = 0; s < size; ++s) panel.roster.push_back({"p" + std::to_string(p) + "-a" + std::to_string(s), random_role(rng)});
        for (unsigned r = 0, nr = 1 + rng() % 3; r < nr; ++r) {
            Round round;
            for (const auto& slot : panel.roster) {
                round.push_back({slot.agent_id, slot.role, static_cast<int>(p), static_cast<int>(r + 1),
                                 {choice(), random_text(rng, 40) + "."}});
            }
            panel.rounds.push_back(std::move(round));
        }
        if (coin()) panel.consensus = choice();
        if (coin()) panel.handoff_summary = random_text(rng, 60);
        panel.handoff_extractive = coin();
        t.panels.push_back(std::move(panel));
    }
    t.final_choice = choice();
    t.decision_source = static_cast<DecisionSource>(rng() % 3);
    if (coin()) t.fallback = Verdict{choice(), random_text(rng, 30) + "!"};
    return t;
}

// Runs the scripted protocol fixture into `out_dir` with a call log that keeps
// request bodies. `stop` may interrupt the batch.
struct FixtureRun {
    BatchSummary summary;
    std::filesystem::path transcripts;
    std::filesystem::path calls;
};

inline FixtureRun run_protocol_fixture(const std::filesystem::path& out_dir, const std::atomic<bool>* stop = nullptr,
                                       int max_concurrent = 0) {
    static const PromptTemplates templates = PromptTemplates::defaults();
    const auto dir = fixture("protocol");
    auto corpus = parse_notes_file(dir / "corpus.jsonl");
    auto tasks = read_task_set_file(dir / "tasks.jsonl");
    auto config = decode_config(nlohmann::json::parse(slurp(dir / "config.json")));
    if (max_concurrent > 0) config.max_concurrent_requests = max_concurrent;

    std::filesystem::create_directories(out_dir);
    auto log = CallLog::to_file(out_dir / "calls.jsonl", true);
    GatewayOptions o;
    o.retry_limit = config.retry_limit;
    o.max_concurrent_requests = config.max_concurrent_requests;
    o.backoff_base = std::chrono::milliseconds(0);
    Gateway gateway(ScriptedBackend::from_file(dir / "script.jsonl"), o, log);

    BatchOptions opts;
    opts.config = config;
    opts.templates = &templates;
    opts.transcripts_path = out_dir / "transcripts.jsonl";
    opts.errors_path = out_dir / "errors.jsonl";
    opts.stop = stop;
    FixtureRun out;
    out.summary = run_batch(gateway, tasks, corpus.notes, default_aliases(), opts);
    out.transcripts = opts.transcripts_path;
    out.calls = out_dir / "calls.jsonl";
    return out;
}

}  // namespace clinmas::testing
