#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "clinmas/codec.hpp"
#include "clinmas/dataset.hpp"
#include "clinmas/dynamics.hpp"
#include "clinmas/evaluation.hpp"
#include "clinmas/gateway.hpp"
#include "clinmas/hashing.hpp"
#include "clinmas/http_backend.hpp"
#include "clinmas/persistence.hpp"
#include "clinmas/prompts.hpp"
#include "clinmas/runner.hpp"
#include "clinmas/scripted_backend.hpp"

namespace fs = std::filesystem;
using namespace clinmas;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

// Exit codes
constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kCaseErrors = 3;
constexpr int kCoverage = 4;
constexpr int kInterrupted = 130;

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    return out;
}

std::vector<ProblemLabel> load_labels(const std::string& aliases_path) {
    return aliases_path.empty() ? default_aliases() : parse_aliases_file(aliases_path);
}

std::vector<std::string> load_problem_list(const std::string& list, const std::string& file) {
    std::vector<std::string> out;
    if (!file.empty()) {
        std::ifstream in(file);
        if (!in) throw InvalidArgument("cannot open " + file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
            out.push_back(normalize_role(line));
        }
    } else if (!list.empty()) {
        std::stringstream ss(list);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(normalize_role(item));
    } else {
        out = default_problems();
    }
    return out;
}

std::vector<ProblemLabel> select_labels(const std::vector<ProblemLabel>& all, const std::vector<std::string>& names) {
    std::vector<ProblemLabel> out;
    for (const auto& n : names) out.push_back(find_label(all, n));
    return out;
}

ParsedCorpus load_corpus(const std::string& path) {
    auto corpus = parse_notes_file(path);
    for (const auto& issue : corpus.issues) {
        std::cerr << "warning: " << path << ":" << issue.line << ": " << issue.message << "\n";
    }
    return corpus;
}

struct CurateArgs {
    std::string corpus, aliases, problems, problems_file, out, report;
};

int cmd_curate(const CurateArgs& a) {
    auto corpus = load_corpus(a.corpus);
    auto labels = load_labels(a.aliases);
    auto names = load_problem_list(a.problems, a.problems_file);
    auto set = build_task_set(corpus.notes, select_labels(labels, names), curated_problems());
    {
        auto out = open_out(a.out);
        write_task_set(out, set.instances);
    }
    const auto report = set.report.to_json().dump(2);
    std::cout << report << "\n";
    if (!a.report.empty()) open_out(a.report) << report << "\n";
    for (const auto& w : set.report.warnings) std::cerr << "warning: " << w << "\n";
    return kOk;
}

struct RunArgs {
    std::string corpus, tasks, aliases, problems, problems_file, config, backend, out_dir, templates, model;
    std::string response_format = "json_schema";
    std::string api_key_env = "CLINMAS_API_KEY";
    bool log_bodies = true;
    int limit = 0;
    // Overrides; unset flags leave the config file's value.
    std::string name, mode, team_size;
    std::optional<double> threshold, temperature, summarizer_temperature, compaction_threshold, timeout;
    std::optional<int> max_rounds, max_panels, context_limit, max_concurrent, retry_limit, max_output_tokens,
        auto_team_cap;
    int backoff_ms = 250;
};

RunConfig resolve_config(const RunArgs& a) {
    nlohmann::json j = nlohmann::json::object();
    if (!a.config.empty()) {
        std::ifstream in(a.config);
        if (!in) throw ConfigError("cannot open config " + a.config);
        j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ConfigError("config " + a.config + " is not a JSON object");
    }
    if (!a.name.empty()) j["name"] = a.name;
    if (!a.mode.empty()) j["composition_mode"] = a.mode;
    if (!a.team_size.empty()) {
        if (a.team_size == "auto") j["team_size"] = "auto";
        else j["team_size"] = std::stoi(a.team_size);
    }
    auto put = [&](const char* key, const auto& v) {
        if (v) j[key] = *v;
    };
    put("consensus_threshold", a.threshold);
    put("reasoning_temperature", a.temperature);
    put("summarizer_temperature", a.summarizer_temperature);
    put("compaction_threshold", a.compaction_threshold);
    put("request_timeout_seconds", a.timeout);
    put("max_rounds", a.max_rounds);
    put("max_panels", a.max_panels);
    put("context_limit_tokens", a.context_limit);
    put("max_concurrent_requests", a.max_concurrent);
    put("retry_limit", a.retry_limit);
    put("max_output_tokens", a.max_output_tokens);
    put("auto_team_cap", a.auto_team_cap);
    if (!a.templates.empty()) j["template_dir"] = a.templates;
    try {
        auto cfg = decode_config(j);
        cfg.validate();
        return cfg;
    } catch (const DecodeError& e) {
        throw ConfigError(e.what());
    }
}

std::shared_ptr<Backend> make_backend(const RunArgs& a, const RunConfig& cfg) {
    const auto colon = a.backend.find(':');
    if (colon == std::string::npos) throw ConfigError("--backend must be scripted:<file> or http:<base-url>");
    const auto kind = a.backend.substr(0, colon);
    const auto rest = a.backend.substr(colon + 1);
    if (kind == "scripted") return ScriptedBackend::from_file(rest);
    if (kind == "http") return std::make_shared<HttpBackend>(HttpBackendOptions{rest, a.api_key_env, cfg.request_timeout_seconds});
    throw ConfigError("unknown backend kind '" + kind + "'");
}

int cmd_run(const RunArgs& a) {
    const auto cfg = resolve_config(a);
    auto templates = cfg.template_dir.empty() ? PromptTemplates::defaults() : PromptTemplates::load(cfg.template_dir);
    auto corpus = load_corpus(a.corpus);
    auto labels = load_labels(a.aliases);

    std::vector<TaskInstance> tasks;
    if (!a.tasks.empty()) {
        tasks = read_task_set_file(a.tasks);
    } else {
        auto names = load_problem_list(a.problems, a.problems_file);
        auto set = build_task_set(corpus.notes, select_labels(labels, names), curated_problems());
        for (const auto& w : set.report.warnings) std::cerr << "warning: " << w << "\n";
        tasks = std::move(set.instances);
    }
    if (a.limit > 0 && static_cast<int>(tasks.size()) > a.limit) tasks.resize(static_cast<std::size_t>(a.limit));

    auto backend = make_backend(a, cfg);
    auto fmt = parse_response_format(a.response_format);
    if (!fmt) throw ConfigError("unknown response format '" + a.response_format + "'");

    const fs::path out_dir = a.out_dir;
    fs::create_directories(out_dir);
    auto log = CallLog::to_file(out_dir / "calls.jsonl", a.log_bodies);
    GatewayOptions gopts;
    gopts.model = a.model;
    gopts.response_format = *fmt;
    gopts.retry_limit = cfg.retry_limit;
    gopts.max_concurrent_requests = cfg.max_concurrent_requests;
    gopts.backoff_base = std::chrono::milliseconds(a.backoff_ms);
    Gateway gateway(backend, gopts, log);

    std::ostringstream task_bytes;
    write_task_set(task_bytes, tasks);
    RunManifest manifest;
    manifest.config = cfg;
    manifest.corpus_hash = file_hash(a.corpus);
    manifest.task_set_hash = sha256_hex(task_bytes.str());
    manifest.template_hash = templates.hash();
    manifest.template_version = std::string(PromptTemplates::kVersion);
    manifest.backend = backend->descriptor();
    manifest.model = a.model;
    manifest.instances = static_cast<int>(tasks.size());
    write_manifest(out_dir / "manifests.jsonl", manifest);

    std::signal(SIGINT, on_sigint);
    std::signal(SIGTERM, on_sigint);

    BatchOptions opts;
    opts.config = cfg;
    opts.templates = &templates;
    opts.transcripts_path = out_dir / "transcripts.jsonl";
    opts.errors_path = out_dir / "errors.jsonl";
    opts.stop = &g_stop;
    opts.on_warning = [](const std::string& w) { std::cerr << "warning: " << w << "\n"; };
    auto summary = run_batch(gateway, tasks, corpus.notes, labels, opts);

    std::cout << "instances " << summary.total << ", completed " << summary.completed << ", skipped "
              << summary.skipped << ", case errors " << summary.case_errors << ", not started "
              << summary.not_started << "\n";
    if (summary.corrupt_existing) {
        std::cerr << "warning: " << summary.corrupt_existing << " corrupt records in existing transcripts\n";
    }
    if (summary.interrupted) {
        std::cerr << "interrupted; rerun the same command to resume\n";
        return kInterrupted;
    }
    if (summary.case_errors) return kCaseErrors;

    auto have = completed_instances(opts.transcripts_path);
    int gaps = 0;
    for (const auto& t : tasks) gaps += have.count({t.note_id, t.problem}) ? 0 : 1;
    if (gaps) {
        std::cerr << gaps << " task instances have no transcript\n";
        return kCoverage;
    }
    return kOk;
}

struct EvalArgs {
    std::string gold, mas, baseline, out_dir;
};

std::vector<MetricsRow> score(const std::string& method, const PredictionMap& preds,
                              const std::vector<TaskInstance>& gold) {
    std::vector<MetricsRow> rows;
    std::vector<MetricsReport> per_problem;
    for (const auto& [problem, counts] : tally(preds, gold)) {
        auto m = metrics(counts);
        per_problem.push_back(m);
        rows.push_back({problem, method, counts, m});
    }
    rows.push_back({"macro", method, std::nullopt, macro_average(per_problem)});
    return rows;
}

PredictionMap load_checked(const std::string& path) {
    int corrupt = 0;
    auto preds = load_predictions(path, &corrupt);
    if (corrupt) std::cerr << "warning: " << corrupt << " corrupt records skipped in " << path << "\n";
    return preds;
}

int cmd_eval(const EvalArgs& a) {
    if (a.mas.empty() && a.baseline.empty()) throw InvalidArgument("give --mas, --baseline, or both");
    auto gold = read_task_set_file(a.gold);
    std::vector<MetricsRow> rows;
    std::optional<PredictionMap> mas, base;
    try {
        if (!a.baseline.empty()) {
            base = load_checked(a.baseline);
            auto r = score("baseline", *base, gold);
            rows.insert(rows.end(), r.begin(), r.end());
        }
        if (!a.mas.empty()) {
            mas = load_checked(a.mas);
            auto r = score("mas", *mas, gold);
            rows.insert(rows.end(), r.begin(), r.end());
        }
    } catch (const CoverageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kCoverage;
    }
    // Group rows by problem, macro last.
    std::stable_sort(rows.begin(), rows.end(), [](const MetricsRow& x, const MetricsRow& y) {
        const bool xm = x.problem == "macro", ym = y.problem == "macro";
        if (xm != ym) return ym;
        return x.problem < y.problem;
    });
    print_metrics_table(std::cout, rows);
    if (!a.out_dir.empty()) {
        auto out = open_out(fs::path(a.out_dir) / "metrics.csv");
        write_metrics_csv(out, rows);
    }
    if (mas && base) {
        auto buckets = bucket_outcomes(*mas, *base, gold);
        std::cout << "\n";
        write_buckets_csv(std::cout, buckets);
        if (!a.out_dir.empty()) {
            auto out = open_out(fs::path(a.out_dir) / "buckets.csv");
            write_buckets_csv(out, buckets);
        }
    }
    return kOk;
}

struct AnalyzeArgs {
    std::string transcripts, gold, out_dir;
    int min_appearances = 100;
};

int cmd_analyze(const AnalyzeArgs& a) {
    auto read = read_transcripts(a.transcripts);
    for (const auto& w : read.warnings) std::cerr << "warning: " << w << "\n";
    auto gold = read_task_set_file(a.gold);
    const fs::path dir = a.out_dir;

    std::vector<DebateStats> stats;
    try {
        stats = debate_stats(read.transcripts, gold);
    } catch (const CoverageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kCoverage;
    }
    auto recruitment = recruitment_counts(read.transcripts);
    auto report = decisiveness(read.transcripts, a.min_appearances);
    auto pivots = pivot_events(read.transcripts);

    write_debate_stats_csv(std::cout, stats);
    std::cout << "\n";
    write_decisiveness_csv(std::cout, report.ranked);

    auto o1 = open_out(dir / "debate_stats.csv");
    write_debate_stats_csv(o1, stats);
    auto o2 = open_out(dir / "recruitment.csv");
    write_recruitment_csv(o2, recruitment);
    auto o3 = open_out(dir / "decisiveness.csv");
    write_decisiveness_csv(o3, report.ranked);
    auto o4 = open_out(dir / "decisiveness_raw.csv");
    write_decisiveness_csv(o4, report.raw);
    auto o5 = open_out(dir / "pivots.csv");
    write_pivots_csv(o5, pivots);
    return read.corrupt ? kCoverage : kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent debate engine for implicit problem identification in clinical notes"};
    app.require_subcommand(1);

    CurateArgs ca;
    auto* curate = app.add_subcommand("curate", "Build a task set of implicit-diagnosis instances from a corpus");
    curate->add_option("--corpus", ca.corpus, "Corpus file (one note per line)")->required()->check(CLI::ExistingFile);
    curate->add_option("--aliases", ca.aliases, "Alias table; defaults to the built-in table")->check(CLI::ExistingFile);
    curate->add_option("--problems", ca.problems, "Comma-separated problems (default: the three defaults)");
    curate->add_option("--problems-file", ca.problems_file, "File with one problem per line")->check(CLI::ExistingFile);
    curate->add_option("--out", ca.out, "Task-set file to write")->required();
    curate->add_option("--report", ca.report, "Also write the corpus report to this file");

    RunArgs ra;
    ra.model = std::getenv("CLINMAS_MODEL") ? std::getenv("CLINMAS_MODEL") : "default";
    auto* run = app.add_subcommand("run", "Adjudicate every task instance (resumable)");
    run->add_option("--corpus", ra.corpus, "Corpus file")->required()->check(CLI::ExistingFile);
    run->add_option("--tasks", ra.tasks, "Task-set file; default curates from the corpus")->check(CLI::ExistingFile);
    run->add_option("--aliases", ra.aliases, "Alias table")->check(CLI::ExistingFile);
    run->add_option("--problems", ra.problems, "Comma-separated problems when curating on the fly");
    run->add_option("--problems-file", ra.problems_file, "Problem list file when curating on the fly")
        ->check(CLI::ExistingFile);
    run->add_option("--config", ra.config, "JSON config mirroring RunConfig")->check(CLI::ExistingFile);
    run->add_option("--backend", ra.backend, "scripted:<script-file> or http:<base-url>")->required();
    run->add_option("--api-key-env", ra.api_key_env, "Environment variable holding the bearer token")
        ->capture_default_str();
    run->add_option("--model", ra.model, "Model name sent to the backend (env CLINMAS_MODEL)")->capture_default_str();
    run->add_option("--response-format", ra.response_format, "json_schema, json_object or none")
        ->capture_default_str();
    run->add_option("--out-dir", ra.out_dir, "Output directory")->required();
    run->add_option("--templates", ra.templates, "Prompt template directory")->check(CLI::ExistingDirectory);
    run->add_flag("--log-bodies,!--no-log-bodies", ra.log_bodies, "Keep request/response bodies in calls.jsonl")
        ->capture_default_str();
    run->add_option("--limit", ra.limit, "Only the first N task instances");
    run->add_option("--backoff-ms", ra.backoff_ms, "Base delay for transport retries")->capture_default_str();
    run->add_option("--name", ra.name, "Config name (becomes the config id)");
    run->add_option("--mode", ra.mode, "baseline, dynamic, generic, static_dynamic or hybrid");
    run->add_option("--team-size", ra.team_size, "Panel size or 'auto'");
    run->add_option("--auto-team-cap", ra.auto_team_cap, "Upper bound for model-chosen team sizes");
    run->add_option("--threshold", ra.threshold, "Consensus threshold in (0.5, 1]");
    run->add_option("--max-rounds", ra.max_rounds, "Debate rounds per panel");
    run->add_option("--max-panels", ra.max_panels, "Panels per case");
    run->add_option("--temperature", ra.temperature, "Reasoning temperature");
    run->add_option("--summarizer-temperature", ra.summarizer_temperature, "Summarizer temperature");
    run->add_option("--context-limit", ra.context_limit, "Context limit in tokens");
    run->add_option("--compaction-threshold", ra.compaction_threshold, "Fraction of the limit that triggers compaction");
    run->add_option("--max-concurrent", ra.max_concurrent, "Concurrent cases and requests");
    run->add_option("--retry-limit", ra.retry_limit, "Attempts per call");
    run->add_option("--max-output-tokens", ra.max_output_tokens, "Completion token cap per call");
    run->add_option("--timeout", ra.timeout, "Per-request timeout in seconds");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Score predictions against the gold task set");
    eval->add_option("--gold", ea.gold, "Task-set file with gold labels")->required()->check(CLI::ExistingFile);
    eval->add_option("--mas", ea.mas, "Transcripts or predictions of the multi-agent system")->check(CLI::ExistingFile);
    eval->add_option("--baseline", ea.baseline, "Transcripts or predictions of the baseline")
        ->check(CLI::ExistingFile);
    eval->add_option("--out-dir", ea.out_dir, "Write metrics.csv (and buckets.csv) here");

    AnalyzeArgs aa;
    auto* analyze = app.add_subcommand("analyze", "Debate statistics, recruitment, and decisiveness");
    analyze->add_option("--transcripts", aa.transcripts, "Transcript file")->required()->check(CLI::ExistingFile);
    analyze->add_option("--gold", aa.gold, "Task-set file with gold labels")->required()->check(CLI::ExistingFile);
    analyze->add_option("--out-dir", aa.out_dir, "Output directory")->required();
    analyze->add_option("--min-appearances", aa.min_appearances, "Ranked roles need more appearances than this")
        ->capture_default_str();

    std::string dump_dir;
    auto* templates = app.add_subcommand("templates", "Write the built-in prompt templates");
    templates->add_option("--dump", dump_dir, "Directory to write <name>.txt files into")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*curate) return cmd_curate(ca);
        if (*run) return cmd_run(ra);
        if (*eval) return cmd_eval(ea);
        if (*analyze) return cmd_analyze(aa);
        if (*templates) {
            PromptTemplates::defaults().write(dump_dir);
            return kOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kUsage;
}
