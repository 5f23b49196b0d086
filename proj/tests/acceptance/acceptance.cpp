#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "clinmas/codec.hpp"
#include "clinmas/context_window.hpp"
#include "clinmas/dataset.hpp"
#include "clinmas/dynamics.hpp"
#include "clinmas/evaluation.hpp"
#include "clinmas/http_backend.hpp"
#include "clinmas/orchestrator.hpp"
#include "clinmas/persistence.hpp"
#include "support.hpp"

using namespace clinmas;
using nlohmann::json;

namespace {

constexpr double kTol = 0.0005;

struct Outcome {
    enum class Status { Pass, Fail, Skip } status = Status::Pass;
    std::string detail;
};

// Collects failed checks for one criterion.
class Checker {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok && failures_.size() < 5) failures_.push_back(what);
        failed_ |= !ok;
    }
    void near(double got, double want, const std::string& what) {
        std::ostringstream ss;
        ss << what << ": got " << std::fixed << std::setprecision(4) << got << ", want " << std::setprecision(3) << want;
        expect(std::abs(got - want) <= kTol, ss.str());
    }
    Outcome outcome(std::string pass_detail) const {
        if (!failed_) return {Outcome::Status::Pass, std::move(pass_detail)};
        std::string d;
        for (const auto& f : failures_) d += (d.empty() ? "" : "; ") + f;
        return {Outcome::Status::Fail, d};
    }

private:
    bool failed_ = false;
    std::vector<std::string> failures_;
};

const PromptTemplates& templates() {
    static const PromptTemplates t = PromptTemplates::defaults();
    return t;
}

struct Row {
    const char* label;
    ConfusionCounts counts;
    double precision, recall, specificity, f1;
    bool mas;
};

// Published per-problem rows.
const Row kReferenceRows[] = {
    {"CHF baseline", {26, 279, 49, 66}, 0.347, 0.283, 0.851, 0.311, false},
    {"CHF MAS", {26, 286, 42, 66}, 0.382, 0.283, 0.872, 0.325, true},
    {"AKI baseline", {80, 200, 86, 54}, 0.482, 0.597, 0.699, 0.533, false},
    {"AKI MAS", {83, 197, 89, 51}, 0.483, 0.619, 0.689, 0.542, true},
    {"sepsis baseline", {96, 213, 78, 33}, 0.552, 0.744, 0.732, 0.634, false},
    {"sepsis MAS", {99, 209, 82, 30}, 0.547, 0.767, 0.718, 0.639, true},
};

Outcome metric_arithmetic() {
    Checker c;
    int checked = 0;
    for (const auto& row : kReferenceRows) {
        auto m = metrics(row.counts);
        c.expect(m.precision && m.recall && m.specificity && m.f1, std::string(row.label) + ": undefined metric");
        if (!(m.precision && m.recall && m.specificity && m.f1)) continue;
        c.near(*m.precision, row.precision, std::string(row.label) + " precision");
        c.near(*m.recall, row.recall, std::string(row.label) + " recall");
        c.near(*m.specificity, row.specificity, std::string(row.label) + " specificity");
        c.near(*m.f1, row.f1, std::string(row.label) + " f1");
        checked += 4;
    }
    return c.outcome(std::to_string(checked) + " values");
}

Outcome macro_f1() {
    Checker c;
    std::vector<MetricsReport> base, mas;
    for (const auto& row : kReferenceRows) {
        MetricsReport r;
        r.f1 = row.f1;
        (row.mas ? mas : base).push_back(r);
    }
    const double b = *macro_average(base).f1;
    const double m = *macro_average(mas).f1;
    c.near(b, 0.493, "baseline macro F1");
    c.near(m, 0.502, "MAS macro F1");
    std::ostringstream d;
    d << std::fixed << std::setprecision(4) << "baseline " << b << ", MAS " << m;
    return c.outcome(d.str());
}

Outcome decisiveness_table() {
    struct P {
        int p, n;
        double score;
    };
    // Published (pivots, appearances, score) triples.
    const P rows[] = {{12, 196, 0.061}, {19, 421, 0.045}, {15, 405, 0.037}, {12, 376, 0.032}, {9, 414, 0.022},
                      {17, 113, 0.150}, {12, 101, 0.119}, {13, 135, 0.096}, {30, 313, 0.096}, {37, 426, 0.087},
                      {25, 237, 0.105}, {22, 210, 0.105}, {36, 411, 0.088}, {36, 429, 0.084}, {22, 296, 0.074}};
    Checker c;
    for (const auto& r : rows) {
        c.near(decisiveness_score(r.p, r.n), r.score, std::to_string(r.p) + "/" + std::to_string(r.n));
    }
    return c.outcome("15 pairs");
}

Outcome consensus_oracle() {
    Checker c;
    int cases = 0;
    for (double threshold : {0.6, 0.8, 1.0}) {
        const int pct = static_cast<int>(threshold * 100 + 0.5);
        for (int n = 1; n <= 7; ++n) {
            for (int mask = 0; mask < (1 << n); ++mask) {
                std::vector<Choice> votes;
                int yes = 0;
                for (int i = 0; i < n; ++i) {
                    const bool y = (mask >> i) & 1;
                    yes += y;
                    votes.push_back(y ? Choice::Yes : Choice::No);
                }
                std::optional<Choice> want;
                if (yes * 100 >= pct * n) want = Choice::Yes;
                else if ((n - yes) * 100 >= pct * n) want = Choice::No;
                c.expect(check_consensus(votes, threshold) == want,
                         "n=" + std::to_string(n) + " mask=" + std::to_string(mask));
                ++cases;
            }
        }
    }
    return c.outcome(std::to_string(cases) + " vectors");
}

std::vector<Choice> votes(const std::string& pattern) {
    std::vector<Choice> v;
    for (char ch : pattern) v.push_back(ch == 'Y' ? Choice::Yes : Choice::No);
    return v;
}

int purpose_count(const testing::Scripted& s, const std::string& purpose) {
    return static_cast<int>(s.calls_where("purpose", purpose).size());
}

Outcome protocol_state_machine() {
    Checker c;
    RunConfig config;
    config.composition_mode = CompositionMode::Dynamic;
    config.team_size = 5;
    const auto note = testing::make_note("n", "Dyspnea.", "BNP 900.");
    const auto problem = ProblemLabel::make("congestive heart failure", {"chf"});
    const std::vector<std::string> roles = {"Cardiologist", "Nephrologist", "Pulmonologist", "Internist", "Intensivist"};
    std::vector<CaseTranscript> produced;

    {
        testing::Scripted s;
        s.add_manager_defaults(roles);
        s.add_round(0, 1, votes("YYYYY"));
        auto t = Manager(*s.gateway, config, templates()).run_case(note, problem);
        c.expect(t.panels.size() == 1 && t.total_rounds() == 1, "(a) unanimous: expected 1 panel, 1 round");
        c.expect(t.decision_source == DecisionSource::Consensus && t.final_choice == Choice::Yes, "(a) consensus Yes");
        produced.push_back(t);
    }
    {
        testing::Scripted s;
        s.add_manager_defaults(roles);
        for (int p = 0; p < 3; ++p) {
            for (int r = 1; r <= 3; ++r) s.add_round(p, r, votes("YYYNN"));
        }
        s.add({{"role_key", "manager"}, {"schema_id", "verdict"}, {"response", testing::verdict_json(Choice::No)}});
        auto t = Manager(*s.gateway, config, templates()).run_case(note, problem);
        bool shape = t.panels.size() == 3;
        for (const auto& p : t.panels) shape &= p.rounds.size() == 3 && !p.consensus;
        c.expect(shape, "(b) split: expected 3 panels x 3 rounds");
        c.expect(purpose_count(s, "fallback") == 1, "(b) split: expected exactly one fallback call");
        c.expect(t.decision_source == DecisionSource::Fallback, "(b) decision source fallback");
        produced.push_back(t);
    }
    {
        testing::Scripted s;
        s.add_manager_defaults(roles);
        s.add_round(0, 1, votes("YYYNN"));
        s.add_round(0, 2, votes("YYYYN"));
        auto t = Manager(*s.gateway, config, templates()).run_case(note, problem);
        c.expect(t.panels.size() == 1 && t.panels[0].rounds.size() == 2 && t.panels[0].consensus == Choice::Yes,
                 "(c) flip: expected consensus at round 2");
        produced.push_back(t);
    }

    testing::TempDir dir;
    auto run = testing::run_protocol_fixture(dir.path());
    c.expect(run.summary.completed == 32, "fixture batch incomplete");
    for (auto& t : read_transcripts(run.transcripts).transcripts) produced.push_back(std::move(t));
    for (const auto& t : produced) {
        auto issues = check_transcript(t);
        c.expect(issues.empty(), t.note_id + ": " + (issues.empty() ? "" : issues.front()));
        c.expect(derive_decision_source(t) == t.decision_source, t.note_id + ": decision source mismatch");
        c.expect(static_cast<int>(t.panels.size()) <= t.limits.max_panels, t.note_id + ": panel cap");
        for (const auto& p : t.panels) {
            c.expect(static_cast<int>(p.rounds.size()) <= t.limits.max_rounds, t.note_id + ": round cap");
        }
    }
    return c.outcome(std::to_string(produced.size()) + " transcripts checked");
}

Outcome so_isolation() {
    Checker c;
    testing::TempDir dir;
    auto run = testing::run_protocol_fixture(dir.path());
    auto corpus = parse_notes_file(testing::fixture("protocol/corpus.jsonl"));
    std::vector<std::string> sentinels;
    for (const auto& n : corpus.notes) {
        if (n.assessment) sentinels.push_back(*n.assessment);
        if (n.plan) sentinels.push_back(*n.plan);
    }
    c.expect(!sentinels.empty(), "fixture has no sentinels");
    std::ifstream in(run.calls);
    int bodies = 0;
    for (std::string line; std::getline(in, line);) {
        auto entry = json::parse(line);
        if (!entry.contains("request_body")) continue;
        ++bodies;
        const auto body = entry["request_body"].get<std::string>();
        for (const auto& s : sentinels) c.expect(body.find(s) == std::string::npos, "sentinel in a request body");
        c.expect(body.find("SENTINEL") == std::string::npos, "sentinel marker in a request body");
    }
    c.expect(bodies > 0, "no request bodies logged");
    return c.outcome(std::to_string(bodies) + " bodies, " + std::to_string(sentinels.size()) + " sentinels");
}

Outcome compaction() {
    Checker c;
    testing::Scripted s;
    const auto tokens = [](std::size_t n, char fill) { return std::string(n * 4, fill); };
    s.add({{"schema_id", "summary"}, {"response", {{"summary", tokens(100, 's')}}}});
    History h(*s.gateway);
    h.append({ChatMessage::Role::System, tokens(50, 'a')});
    h.append({ChatMessage::Role::User, tokens(800, 'b')});
    h.append({ChatMessage::Role::Assistant, tokens(50, 'c')});
    CompactionPolicy policy;
    policy.context_limit_tokens = 1000;
    policy.threshold = 0.7;
    policy.summarizer_temperature = 0.1;
    auto r = maybe_compact(h, policy, *s.gateway, CallTag{"n", "sepsis", "p0-a0", "generic", 0, 2, "reconsider"});
    auto calls = s.calls();
    c.expect(r.summarized == 1 && calls.size() == 1, "expected exactly one summarization");
    if (calls.size() == 1) {
        c.expect(std::abs(calls[0]["temperature"].get<double>() - 0.1) < 1e-12, "summarizer temperature");
        auto body = json::parse(calls[0]["request_body"].get<std::string>());
        c.expect(body.dump().find(tokens(800, 'b')) != std::string::npos, "longest message not the one summarized");
        c.expect(body.dump().find(tokens(50, 'a')) == std::string::npos, "other messages sent to the summarizer");
    }
    const auto& m = r.history.messages();
    c.expect(m.size() == 3 && m[0] == h.messages()[0] && m[2] == h.messages()[2] &&
                 m[1].role == ChatMessage::Role::User && m[1].content == tokens(100, 's'),
             "order or content not preserved");
    return c.outcome("900 -> " + std::to_string(r.history.total_tokens()) + " tokens");
}

Outcome dataset_oracle() {
    Checker c;
    std::mt19937 rng(2024);
    const auto labels = default_aliases();
    const std::vector<std::string> vocab = {"stable", "chf", "CHF.", "heart failure", "asepsis", "sepsis", "septic shock",
                                            "aki", "(AKI)", "acute kidney injury", "x-aki", "creatinine", "renal",
                                            "urosepsis", "heartfailure", "non-chf"};
    const auto lower = [](std::string s) {
        for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        return s;
    };
    // Tokenizes on non-alphanumerics and looks for the alias token sequence.
    const auto tokens_of = [&](const std::string& text) {
        std::vector<std::string> out;
        std::string cur;
        for (char ch : lower(text)) {
            if (std::isalnum(static_cast<unsigned char>(ch))) {
                cur += ch;
            } else {
                out.push_back(cur);
                cur.clear();
                out.push_back(std::string(1, ch));
            }
        }
        out.push_back(cur);
        return out;
    };
    const auto oracle_mentions = [&](const std::string& text, const ProblemLabel& label) {
        const auto t = tokens_of(text);
        for (const auto& alias : label.aliases) {
            const auto a = tokens_of(alias);
            for (std::size_t i = 0; i + a.size() <= t.size(); ++i) {
                if (std::equal(a.begin(), a.end(), t.begin() + static_cast<long>(i))) return true;
            }
        }
        return false;
    };
    int instances = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<SoapNote> notes;
        for (int i = 0, n = static_cast<int>(rng() % 201); i < n; ++i) {
            auto text = [&] {
                std::string s;
                for (int w = static_cast<int>(rng() % 7); w > 0; --w) s += vocab[rng() % vocab.size()] + " ";
                return s;
            };
            auto note = testing::make_note("n" + std::to_string(i), text(), rng() % 10 ? text() : "");
            for (const auto& p : default_problems()) {
                if (rng() % 2) note.gold_problems.insert(p);
            }
            notes.push_back(std::move(note));
        }
        for (const auto& p : default_problems()) {
            const auto& label = find_label(labels, p);
            std::set<TaskInstance> want;
            for (const auto& n : notes) {
                if (n.subjective.empty() || n.objective.empty()) continue;
                const bool gold = n.gold_problems.count(p) > 0;
                if (!gold) want.insert({n.note_id, p, Choice::No});
                else if (!oracle_mentions(n.subjective, label) && !oracle_mentions(n.objective, label))
                    want.insert({n.note_id, p, Choice::Yes});
            }
            auto got_v = filter_implicit(notes, label);
            std::set<TaskInstance> got(got_v.begin(), got_v.end());
            c.expect(got.size() == got_v.size(), "duplicate instances");
            c.expect(got == want, "trial " + std::to_string(trial) + " " + p + " differs from oracle");
            for (const auto& t : got_v) {
                if (t.gold != Choice::Yes) continue;
                for (const auto& n : notes) {
                    if (n.note_id == t.note_id) c.expect(!mentions_problem(so_text(n), label), "positive mentions alias");
                }
            }
            instances += static_cast<int>(got_v.size());
        }
    }
    return c.outcome("50 corpora, " + std::to_string(instances) + " instances");
}

Outcome determinism() {
    Checker c;
    testing::TempDir a, b;
    auto ra = testing::run_protocol_fixture(a.path());
    auto rb = testing::run_protocol_fixture(b.path());
    const auto ta = testing::slurp(ra.transcripts);
    c.expect(!ta.empty() && ta == testing::slurp(rb.transcripts), "transcript files differ between runs");
    std::mt19937 rng(99);
    for (int i = 0; i < 1000; ++i) {
        auto t = testing::random_transcript(rng);
        auto back = decode_transcript(json::parse(encode_transcript(t).dump()));
        c.expect(back == t, "round trip " + std::to_string(i) + " not identical");
    }
    return c.outcome(std::to_string(ta.size()) + " identical bytes, 1000 round trips");
}

Outcome live_smoke() {
    const char* base = std::getenv("CLINMAS_LIVE_BASE_URL");
    if (!base || !*base) return {Outcome::Status::Skip, "CLINMAS_LIVE_BASE_URL not set"};
    Checker c;
    const char* model = std::getenv("CLINMAS_LIVE_MODEL");
    RunConfig config;
    config.composition_mode = CompositionMode::Dynamic;
    config.team_size = 3;
    GatewayOptions o;
    o.model = model && *model ? model : "default";
    o.max_concurrent_requests = 4;
    auto log = std::make_shared<CallLog>(false);
    Gateway gateway(std::make_shared<HttpBackend>(HttpBackendOptions{base, "CLINMAS_API_KEY", 120.0}), o, log);
    const auto note = testing::make_note("live-1", "Progressive dyspnea and orthopnea over two weeks, 4 kg weight gain.",
                                         "JVP 14 cm, bibasilar crackles, 2+ pitting edema, BNP 1850, EF 30%.");
    try {
        auto t = Manager(gateway, config, templates()).run_case(note, ProblemLabel::make("congestive heart failure"));
        auto issues = check_transcript(t);
        c.expect(issues.empty(), issues.empty() ? "" : issues.front());
        c.expect(decode_transcript(encode_transcript(t)) == t, "transcript does not round-trip");
        return c.outcome(std::string(to_string(t.final_choice)) + " via " + std::string(to_string(t.decision_source)) +
                         ", " + std::to_string(log->entries().size()) + " calls");
    } catch (const std::exception& e) {
        return {Outcome::Status::Fail, e.what()};
    }
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"metric arithmetic", metric_arithmetic},
        {"macro-average F1", macro_f1},
        {"decisiveness scores", decisiveness_table},
        {"consensus oracle", consensus_oracle},
        {"protocol state machine", protocol_state_machine},
        {"S+O isolation", so_isolation},
        {"context compaction", compaction},
        {"dataset filter oracle", dataset_oracle},
        {"determinism and persistence", determinism},
        {"live smoke", live_smoke},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {Outcome::Status::Fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const char* tag = o.status == Outcome::Status::Pass ? "PASS" : o.status == Outcome::Status::Fail ? "FAIL" : "SKIP";
        failed += o.status == Outcome::Status::Fail;
        std::cout << tag << "  " << std::setw(2) << i + 1 << "  " << std::left << std::setw(30) << criteria[i].first
                  << std::right << std::fixed << std::setprecision(3) << std::setw(8) << secs << " s  " << o.detail
                  << "\n";
    }
    return failed ? 1 : 0;
}
