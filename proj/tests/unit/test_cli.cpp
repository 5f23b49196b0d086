#include <doctest.h>

#include <array>
#include <cstdio>
#include <sys/wait.h>

#include "clinmas/persistence.hpp"
#include "support.hpp"

using namespace clinmas;
using clinmas::testing::fixture;
using clinmas::testing::slurp;
using clinmas::testing::spit;
using clinmas::testing::TempDir;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result cli(const std::string& args) {
    const std::string cmd = std::string("'") + CLINMAS_CLI_PATH + "' " + args + " 2>&1";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    while (auto n = fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::string run_args(const std::filesystem::path& out) {
    const auto fx = fixture("protocol");
    return "run --corpus " + q(fx / "corpus.jsonl") + " --tasks " + q(fx / "tasks.jsonl") + " --config " +
           q(fx / "config.json") + " --backend scripted:" + q(fx / "script.jsonl") + " --out-dir " + q(out) +
           " --backoff-ms 0";
}

}  // namespace

TEST_CASE("run produces every output file and reruns are idempotent") {
    TempDir dir;
    auto r = cli(run_args(dir.path()));
    CHECK(r.code == 0);
    CHECK(r.out.find("completed 32") != std::string::npos);
    for (const char* f : {"calls.jsonl", "manifests.jsonl", "transcripts.jsonl"}) {
        CHECK(std::filesystem::exists(dir / f));
    }
    const auto before = slurp(dir / "transcripts.jsonl");
    CHECK(slurp(dir / "calls.jsonl").find("SENTINEL") == std::string::npos);

    auto again = cli(run_args(dir.path()));
    CHECK(again.code == 0);
    CHECK(again.out.find("skipped 32") != std::string::npos);
    CHECK(slurp(dir / "transcripts.jsonl") == before);
    CHECK(read_manifests(dir / "manifests.jsonl").size() == 2);

    TempDir other;
    CHECK(cli(run_args(other.path())).code == 0);
    CHECK(slurp(other / "transcripts.jsonl") == before);
}

TEST_CASE("eval prints the published table from the fixture predictions") {
    TempDir dir;
    auto r = cli("eval --gold " + q(fixture("reference_counts/gold.jsonl")) + " --mas " + q(fixture("reference_counts/mas.jsonl")) +
                 " --baseline " + q(fixture("reference_counts/baseline.jsonl")) + " --out-dir " + q(dir.path()));
    CHECK(r.code == 0);
    for (const char* v : {"0.347", "0.283", "0.851", "0.311", "0.382", "0.872", "0.325", "0.482", "0.597", "0.699",
                          "0.533", "0.483", "0.619", "0.689", "0.542", "0.552", "0.744", "0.732", "0.634", "0.547",
                          "0.767", "0.718", "0.639", "0.460", "0.541", "0.761", "0.493", "0.471", "0.556", "0.760",
                          "0.502"}) {
        CHECK_MESSAGE(r.out.find(v) != std::string::npos, v);
    }
    CHECK(std::filesystem::exists(dir / "metrics.csv"));
    CHECK(std::filesystem::exists(dir / "buckets.csv"));
}

TEST_CASE("eval reports coverage gaps with a distinct exit code") {
    TempDir dir;
    auto text = slurp(fixture("reference_counts/mas.jsonl"));
    auto cut = text.rfind('\n', text.size() / 2);
    spit(dir / "partial.jsonl", text.substr(0, cut + 1));
    auto r = cli("eval --gold " + q(fixture("reference_counts/gold.jsonl")) + " --mas " + q(dir / "partial.jsonl"));
    CHECK(r.code == 4);
}

TEST_CASE("analyze writes its tables from a fixture run") {
    TempDir dir;
    REQUIRE(cli(run_args(dir.path())).code == 0);
    auto r = cli("analyze --transcripts " + q(dir / "transcripts.jsonl") + " --gold " +
                 q(fixture("protocol/tasks.jsonl")) + " --out-dir " + q(dir / "analysis") + " --min-appearances 1");
    CHECK(r.code == 0);
    for (const char* f : {"debate_stats.csv", "recruitment.csv", "decisiveness.csv", "decisiveness_raw.csv", "pivots.csv"}) {
        CHECK(std::filesystem::exists(dir / "analysis" / f));
    }
}

TEST_CASE("usage and configuration errors exit with code 2") {
    TempDir dir;
    CHECK(cli("no-such-command").code == 2);
    CHECK(cli(run_args(dir.path()) + " --threshold 1.5").code == 2);
    CHECK(cli(run_args(dir.path()) + " --mode nonsense").code == 2);
    CHECK(cli("run --corpus " + q(fixture("protocol/corpus.jsonl")) + " --backend bogus:x --out-dir " + q(dir.path()))
              .code == 2);
}

TEST_CASE("curate writes a task set and reports counts") {
    TempDir dir;
    auto r = cli("curate --corpus " + q(fixture("protocol/corpus.jsonl")) + " --out " + q(dir / "tasks.jsonl") +
                 " --report " + q(dir / "report.json"));
    CHECK(r.code == 0);
    auto tasks = read_task_set_file(dir / "tasks.jsonl");
    CHECK_FALSE(tasks.empty());
    auto report = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(report["notes_in"] == 32);
}

TEST_CASE("templates can be dumped and match the built-ins") {
    TempDir dir;
    CHECK(cli("templates --dump " + q(dir / "t")).code == 0);
    CHECK(PromptTemplates::load(dir / "t").hash() == PromptTemplates::defaults().hash());
}
