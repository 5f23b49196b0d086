#include <doctest.h>

#include "clinmas/orchestrator.hpp"
#include "support.hpp"

using namespace clinmas;
using clinmas::testing::make_note;
using clinmas::testing::Scripted;
using clinmas::testing::verdict_json;
using clinmas::testing::votes;
using nlohmann::json;

namespace {

const PromptTemplates& templates() {
    static const PromptTemplates t = PromptTemplates::defaults();
    return t;
}

const std::vector<std::string> kFive = {"Cardiologist", "Nephrologist", "Pulmonologist", "Internist", "Intensivist"};

SoapNote note() {
    return make_note("n-1", "Dyspnea on exertion, orthopnea.", "JVP elevated, BNP 900, creatinine 1.4.",
                     "SENTINEL-ASSESSMENT", "SENTINEL-PLAN", {"congestive heart failure"});
}

ProblemLabel chf() { return ProblemLabel::make("congestive heart failure", {"chf"}); }
ProblemLabel aki() { return ProblemLabel::make("acute kidney injury", {"aki"}); }
ProblemLabel sepsis() { return ProblemLabel::make("sepsis", {}); }

RunConfig dynamic_config() {
    RunConfig c;
    c.composition_mode = CompositionMode::Dynamic;
    c.team_size = 5;
    return c;
}

std::string body_text(const json& call) { return call["request_body"].get<std::string>(); }

int count_purpose(const Scripted& s, const std::string& prefix) {
    int n = 0;
    for (const auto& c : s.calls()) {
        if (c["purpose"].get<std::string>().rfind(prefix, 0) == 0) ++n;
    }
    return n;
}

void check_no_sentinels(const Scripted& s) {
    for (const auto& c : s.calls()) REQUIRE(body_text(c).find("SENTINEL") == std::string::npos);
}

}  // namespace

TEST_CASE("unanimous first round ends the case after one panel") {
    Scripted s;
    s.add_manager_defaults(kFive);
    s.add_round(0, 1, votes("YYYYY"));
    Manager m(*s.gateway, dynamic_config(), templates());
    auto t = m.run_case(note(), chf());
    CHECK(t.final_choice == Choice::Yes);
    CHECK(t.decision_source == DecisionSource::Consensus);
    REQUIRE(t.panels.size() == 1);
    CHECK(t.panels[0].rounds.size() == 1);
    CHECK(t.total_rounds() == 1);
    CHECK(t.panels[0].consensus == Choice::Yes);
    CHECK_FALSE(t.panels[0].handoff_summary);
    CHECK_FALSE(t.fallback);
    CHECK(check_transcript(t).empty());
    CHECK(count_purpose(s, "handoff") == 0);
    CHECK(count_purpose(s, "fallback") == 0);
    CHECK(count_purpose(s, "analyze") == 5);
    CHECK(count_purpose(s, "reconsider") == 0);
    check_no_sentinels(s);
}

TEST_CASE("persistent split exhausts every panel and falls back once") {
    Scripted s;
    s.add_manager_defaults(kFive);
    for (int p = 0; p < 3; ++p) {
        for (int r = 1; r <= 3; ++r) s.add_round(p, r, votes("YYYNN"));
    }
    s.add({{"role_key", "manager"}, {"schema_id", "verdict"}, {"response", verdict_json(Choice::Yes, "Weighing all panels.")}});
    Manager m(*s.gateway, dynamic_config(), templates());
    auto t = m.run_case(note(), chf());
    REQUIRE(t.panels.size() == 3);
    for (const auto& p : t.panels) {
        CHECK(p.rounds.size() == 3);
        CHECK_FALSE(p.consensus);
    }
    CHECK(t.total_rounds() == 9);
    CHECK(t.decision_source == DecisionSource::Fallback);
    CHECK(t.final_choice == Choice::Yes);
    REQUIRE(t.fallback);
    CHECK(t.fallback->reasoning == "Weighing all panels.");
    CHECK(check_transcript(t).empty());
    CHECK(count_purpose(s, "fallback") == 1);
    CHECK(count_purpose(s, "handoff") == 2);
    CHECK(count_purpose(s, "roles") == 3);

    // The handoff text is stored verbatim on panels 1 and 2 only.
    CHECK(t.panels[0].handoff_summary == "Prior panel split without agreement.");
    CHECK(t.panels[1].handoff_summary == "Prior panel split without agreement.");
    CHECK_FALSE(t.panels[2].handoff_summary);
    CHECK_FALSE(t.panels[0].handoff_extractive);

    auto fallback = s.calls_where("purpose", "fallback");
    REQUIRE(fallback.size() == 1);
    const auto body = body_text(fallback[0]);
    for (int p = 0; p < 3; ++p) {
        for (int a = 0; a < 5; ++a) {
            CHECK(body.find("p" + std::to_string(p) + "-a" + std::to_string(a)) != std::string::npos);
        }
    }
    check_no_sentinels(s);
}

TEST_CASE("a flip in round two reaches consensus at round two") {
    Scripted s;
    s.add_manager_defaults(kFive);
    s.add_round(0, 1, votes("YYYNN"));
    s.add_round(0, 2, votes("YYYYN"));
    Manager m(*s.gateway, dynamic_config(), templates());
    auto t = m.run_case(note(), chf());
    REQUIRE(t.panels.size() == 1);
    CHECK(t.panels[0].rounds.size() == 2);
    CHECK(t.final_choice == Choice::Yes);
    CHECK(t.decision_source == DecisionSource::Consensus);
    CHECK(check_transcript(t).empty());
    CHECK(count_purpose(s, "reconsider") == 5);
}

TEST_CASE("a later panel can converge and the summary reaches it") {
    Scripted s;
    s.add({{"role_key", "manager"}, {"schema_id", "role_list"}, {"response", {{"specialties", kFive}}}});
    s.add({{"role_key", "manager"}, {"schema_id", "expertise_list"}, {"response", {{"expertise", {"x"}}}}});
    s.add({{"role_key", "manager"}, {"schema_id", "summary"}, {"response", {{"summary", "HANDOFF-TOKEN-5521"}}}});
    for (int r = 1; r <= 3; ++r) s.add_round(0, r, votes("YYNNN"));
    s.add_round(1, 1, votes("NNNNN"));
    Manager m(*s.gateway, dynamic_config(), templates());
    auto t = m.run_case(note(), chf());
    REQUIRE(t.panels.size() == 2);
    CHECK(t.final_choice == Choice::No);
    CHECK(t.decision_source == DecisionSource::Consensus);
    CHECK(t.panels[0].handoff_summary == "HANDOFF-TOKEN-5521");
    CHECK(check_transcript(t).empty());
    int with_token = 0;
    for (const auto& c : s.calls_where("purpose", "analyze")) {
        const bool has = body_text(c).find("HANDOFF-TOKEN-5521") != std::string::npos;
        CHECK(has == (c["panel"] == 1));
        with_token += has;
    }
    CHECK(with_token == 5);
}

TEST_CASE("an unusable summary falls back to an extractive one") {
    Scripted s;
    s.add({{"role_key", "manager"}, {"schema_id", "role_list"}, {"response", {{"specialties", kFive}}}});
    s.add({{"role_key", "manager"}, {"schema_id", "expertise_list"}, {"response", {{"expertise", {"x"}}}}});
    s.add({{"role_key", "manager"}, {"schema_id", "summary"}, {"response", "not json"}});
    for (int r = 1; r <= 3; ++r) s.add_round(0, r, votes("YYNNN"));
    s.add_round(1, 1, votes("YYYYY"));
    Manager m(*s.gateway, dynamic_config(), templates());
    auto t = m.run_case(note(), chf());
    REQUIRE(t.panels.size() == 2);
    REQUIRE(t.panels[0].handoff_summary);
    CHECK(t.panels[0].handoff_extractive);
    const auto& summary = *t.panels[0].handoff_summary;
    CHECK(summary == extractive_summary(t.panels[0]));
    const char* expected[] = {"Yes", "Yes", "No", "No", "No"};
    for (int a = 0; a < 5; ++a) {
        const auto line = "(p0-a" + std::to_string(a) + "): " + expected[a] + ". Slot " + std::to_string(a) +
                          " round 3 vote " + expected[a] + ".";
        CHECK(summary.find(line) != std::string::npos);
    }
    CHECK(check_transcript(t).empty());
}

TEST_CASE("fallback can return No") {
    Scripted s;
    s.add_manager_defaults(kFive);
    for (int p = 0; p < 3; ++p) {
        for (int r = 1; r <= 3; ++r) s.add_round(p, r, votes("YYNNN"));
    }
    s.add({{"role_key", "manager"}, {"schema_id", "verdict"}, {"response", verdict_json(Choice::No)}});
    Manager m(*s.gateway, dynamic_config(), templates());
    auto t = m.run_case(note(), chf());
    CHECK(t.decision_source == DecisionSource::Fallback);
    CHECK(t.final_choice == Choice::No);
}

TEST_CASE("fallback aggregation rejects incomplete or converged panel sets") {
    Scripted s;
    Manager m(*s.gateway, dynamic_config(), templates());
    PanelRecord p;
    p.rounds.push_back({});
    CHECK_THROWS_AS(m.aggregate_fallback({p}, note(), chf()), InvalidArgument);
    PanelRecord done = p;
    done.consensus = Choice::Yes;
    CHECK_THROWS_AS(m.aggregate_fallback({p, p, done}, note(), chf()), InvalidArgument);
    CHECK_THROWS_AS(m.summarize_panel(done, chf(), "n"), InvalidArgument);
}

TEST_CASE("role creation for an AKI note includes a nephrologist with expertise") {
    Scripted s;
    s.add_manager_defaults({"Nephrologist", "Intensivist", "Cardiologist", "Urologist", "Pharmacist"});
    Manager m(*s.gateway, dynamic_config(), templates());
    auto roles = m.create_roles(note(), aki(), 5, 0);
    REQUIRE(roles.size() == 5);
    bool nephro = false;
    for (const auto& r : roles) {
        nephro |= r.normalized_specialty == "nephrologist";
        CHECK_FALSE(r.expertise.empty());
    }
    CHECK(nephro);
    CHECK(count_purpose(s, "expertise:") == 5);
    CHECK(s.calls_where("purpose", "expertise:nephrologist").size() == 1);
    for (const auto& c : s.calls_where("role_key", "manager")) CHECK(c["temperature"] == doctest::Approx(0.5));
}

TEST_CASE("duplicate specialties are re-requested once then disambiguated") {
    Scripted s;
    const std::vector<std::string> dup = {"Cardiologist", "cardiologist", "Nephrologist", "Internist", "Intensivist"};
    s.add({{"role_key", "manager"}, {"schema_id", "role_list"}, {"response", {{"specialties", dup}}}});
    s.add({{"role_key", "manager"}, {"schema_id", "expertise_list"}, {"response", {{"expertise", {"x"}}}}});
    Manager m(*s.gateway, dynamic_config(), templates());
    auto roles = m.create_roles(note(), chf(), 5, 0);
    REQUIRE(roles.size() == 5);
    CHECK(roles[0].normalized_specialty == "cardiologist");
    CHECK(roles[1].normalized_specialty == "cardiologist (2)");
    std::set<std::string> keys;
    for (const auto& r : roles) keys.insert(r.normalized_specialty);
    CHECK(keys.size() == 5);

    auto role_calls = s.calls_where("purpose", "roles");
    REQUIRE(role_calls.size() == 2);
    CHECK(body_text(role_calls[1]).find("repeated or already assigned") != std::string::npos);
}

TEST_CASE("a short role list after the retry is a case error") {
    Scripted s;
    s.add({{"role_key", "manager"}, {"schema_id", "role_list"}, {"response", {{"specialties", {"Cardiologist"}}}}});
    Manager m(*s.gateway, dynamic_config(), templates());
    CHECK_THROWS_AS(m.create_roles(note(), chf(), 5, 0), CaseError);
    CHECK(s.calls_where("purpose", "roles").size() == 2);
}

TEST_CASE("automatic team size is capped") {
    Scripted s;
    s.add_manager_defaults({"A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10"});
    auto c = dynamic_config();
    c.team_size = std::nullopt;
    c.auto_team_cap = 4;
    Manager m(*s.gateway, c, templates());
    CHECK(m.create_roles(note(), chf(), std::nullopt, 0).size() == 4);
}

TEST_CASE("generic mode makes no role or expertise calls") {
    Scripted s;
    s.add_round(0, 1, votes("NNNNN"));
    auto c = dynamic_config();
    c.composition_mode = CompositionMode::Generic;
    Manager m(*s.gateway, c, templates());
    auto t = m.run_case(note(), chf());
    CHECK(t.final_choice == Choice::No);
    CHECK(s.calls_where("role_key", "manager").empty());
    for (const auto& slot : t.panels[0].roster) CHECK(slot.role.kind == RoleKind::Generic);
}

TEST_CASE("static_dynamic CHF teams hold the fixed specialists plus dynamic ones") {
    Scripted s;
    s.add_manager_defaults({"Pulmonologist", "Internist", "Nephrologist"});
    auto c = dynamic_config();
    c.composition_mode = CompositionMode::StaticDynamic;
    Manager m(*s.gateway, c, templates());
    auto roster = m.assemble_team(note(), chf(), 0);
    REQUIRE(roster.size() == 5);
    CHECK(roster[0].role.specialist.normalized_specialty == "cardiologist");
    CHECK(roster[1].role.specialist.normalized_specialty == "cardiac electrophysiologist");
    CHECK(roster[2].role.specialist.normalized_specialty == "pulmonologist");
    CHECK(roster[4].role.specialist.normalized_specialty == "nephrologist");
    CHECK(count_purpose(s, "expertise:") == 5);
}

TEST_CASE("hybrid sepsis teams have two generic, two fixed and one dynamic member") {
    Scripted s;
    s.add_manager_defaults({"Emergency Physician"});
    auto c = dynamic_config();
    c.composition_mode = CompositionMode::Hybrid;
    Manager m(*s.gateway, c, templates());
    auto roster = m.assemble_team(note(), sepsis(), 0);
    REQUIRE(roster.size() == 5);
    CHECK(roster[0].role.kind == RoleKind::Generic);
    CHECK(roster[1].role.kind == RoleKind::Generic);
    CHECK(roster[2].role.specialist.normalized_specialty == "infectious disease specialist");
    CHECK(roster[3].role.specialist.normalized_specialty == "intensive care specialist");
    CHECK(roster[4].role.specialist.normalized_specialty == "emergency physician");
    for (std::size_t i = 0; i < roster.size(); ++i) CHECK(roster[i].agent_id == "p0-a" + std::to_string(i));
}

TEST_CASE("fixed-team modes reject problems without a fixed list") {
    Scripted s;
    auto c = dynamic_config();
    c.composition_mode = CompositionMode::StaticDynamic;
    Manager m(*s.gateway, c, templates());
    CHECK_THROWS_AS(m.run_case(note(), ProblemLabel::make("pneumonia", {})), ConfigError);
    CHECK_THROWS_AS(static_roles_for("pneumonia"), ConfigError);
}

TEST_CASE("a failing agent call becomes a case error") {
    Scripted s;
    s.add_manager_defaults(kFive);
    s.add_round(0, 1, votes("YYYY"));  // the fifth agent has no scripted reply
    Manager m(*s.gateway, dynamic_config(), templates());
    CHECK_THROWS_AS(m.run_case(note(), chf()), CaseError);
}

TEST_CASE("notes without S or O are refused") {
    Scripted s;
    Manager m(*s.gateway, dynamic_config(), templates());
    CHECK_THROWS_AS(m.run_case(make_note("x", "s", ""), chf()), CaseError);
    CHECK(s.calls().empty());
}

TEST_CASE("baseline configs run the zero-shot path") {
    Scripted s;
    s.add({{"role_key", "baseline"}, {"response", verdict_json(Choice::No)}});
    auto c = dynamic_config();
    c.composition_mode = CompositionMode::Baseline;
    Manager m(*s.gateway, c, templates());
    auto t = m.run_case(note(), chf());
    CHECK(t.decision_source == DecisionSource::Baseline);
    CHECK(s.calls().size() == 1);
}
