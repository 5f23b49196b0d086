#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "clinmas/codec.hpp"
#include "clinmas/dataset.hpp"
#include "clinmas/dynamics.hpp"
#include "clinmas/evaluation.hpp"
#include "clinmas/gateway.hpp"
#include "clinmas/orchestrator.hpp"
#include "clinmas/persistence.hpp"
#include "clinmas/prompts.hpp"
#include "clinmas/runner.hpp"
#include "clinmas/scripted_backend.hpp"

namespace py = pybind11;
using nlohmann::json;

// Structured values cross the boundary as JSON text; the Python package
// decodes them.

namespace clinmas {
namespace {

json metrics_json(const MetricsReport& m) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"precision", opt(m.precision)},
            {"recall", opt(m.recall)},
            {"specificity", opt(m.specificity)},
            {"f1", opt(m.f1)},
            {"excluded", {{"precision", m.excluded_precision},
                          {"recall", m.excluded_recall},
                          {"specificity", m.excluded_specificity},
                          {"f1", m.excluded_f1}}}};
}

MetricsReport metrics_from(const json& j) {
    auto opt = [&](const char* k) -> std::optional<double> {
        if (!j.contains(k) || j[k].is_null()) return std::nullopt;
        return j[k].get<double>();
    };
    MetricsReport m;
    m.precision = opt("precision");
    m.recall = opt("recall");
    m.specificity = opt("specificity");
    m.f1 = opt("f1");
    return m;
}

json task_json(const TaskInstance& t) {
    return {{"note_id", t.note_id}, {"problem", t.problem}, {"gold", std::string(to_string(t.gold))}};
}

std::vector<ProblemLabel> labels_for(const std::vector<std::string>& problems, const std::string& aliases_path) {
    const auto all = aliases_path.empty() ? default_aliases() : parse_aliases_file(aliases_path);
    std::vector<ProblemLabel> out;
    for (const auto& p : problems.empty() ? default_problems() : problems) out.push_back(find_label(all, normalize_role(p)));
    return out;
}

std::string curate(const std::string& corpus_path, const std::vector<std::string>& problems,
                   const std::string& aliases_path) {
    auto corpus = parse_notes_file(corpus_path);
    auto set = build_task_set(corpus.notes, labels_for(problems, aliases_path), curated_problems());
    json instances = json::array();
    for (const auto& t : set.instances) instances.push_back(task_json(t));
    json issues = json::array();
    for (const auto& i : corpus.issues) issues.push_back({{"line", i.line}, {"message", i.message}});
    return json{{"instances", instances}, {"report", set.report.to_json()}, {"parse_issues", issues}}.dump();
}

std::string run_scripted(const std::string& corpus_path, const std::string& tasks_path, const std::string& config_json,
                         const std::string& script_path, const std::string& out_dir) {
    auto config = decode_config(json::parse(config_json));
    config.validate();
    const auto templates =
        config.template_dir.empty() ? PromptTemplates::defaults() : PromptTemplates::load(config.template_dir);
    auto corpus = parse_notes_file(corpus_path);
    auto tasks = read_task_set_file(tasks_path);
    std::filesystem::create_directories(out_dir);
    GatewayOptions o;
    o.retry_limit = config.retry_limit;
    o.max_concurrent_requests = config.max_concurrent_requests;
    o.backoff_base = std::chrono::milliseconds(0);
    Gateway gateway(ScriptedBackend::from_file(script_path), o,
                    CallLog::to_file(std::filesystem::path(out_dir) / "calls.jsonl", true));
    BatchOptions opts;
    opts.config = config;
    opts.templates = &templates;
    opts.transcripts_path = std::filesystem::path(out_dir) / "transcripts.jsonl";
    opts.errors_path = std::filesystem::path(out_dir) / "errors.jsonl";
    BatchSummary s;
    {
        py::gil_scoped_release release;
        s = run_batch(gateway, tasks, corpus.notes, default_aliases(), opts);
    }
    return json{{"total", s.total},
                {"skipped", s.skipped},
                {"completed", s.completed},
                {"case_errors", s.case_errors},
                {"not_started", s.not_started},
                {"corrupt_existing", s.corrupt_existing},
                {"interrupted", s.interrupted}}
        .dump();
}

std::string evaluate(const std::string& gold_path, const std::string& predictions_path) {
    auto gold = read_task_set_file(gold_path);
    auto counts = tally(load_predictions(predictions_path), gold);
    json per_problem = json::object();
    std::vector<MetricsReport> reports;
    for (const auto& [problem, c] : counts) {
        auto m = metrics(c);
        reports.push_back(m);
        auto row = metrics_json(m);
        row["counts"] = {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
        per_problem[problem] = row;
    }
    return json{{"per_problem", per_problem}, {"macro", metrics_json(macro_average(reports))}}.dump();
}

std::string analyze(const std::string& transcripts_path, const std::string& gold_path, int min_appearances) {
    auto read = read_transcripts(transcripts_path);
    auto gold = read_task_set_file(gold_path);
    json stats = json::array();
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    for (const auto& s : debate_stats(read.transcripts, gold)) {
        stats.push_back({{"problem", s.problem},
                         {"correct_cases", s.correct_cases},
                         {"incorrect_cases", s.incorrect_cases},
                         {"avg_rounds_correct", opt(s.avg_rounds_correct)},
                         {"avg_rounds_incorrect", opt(s.avg_rounds_incorrect)},
                         {"avg_panels_correct", opt(s.avg_panels_correct)},
                         {"avg_panels_incorrect", opt(s.avg_panels_incorrect)}});
    }
    json recruitment = json::object();
    for (const auto& [problem, c] : recruitment_counts(read.transcripts)) recruitment[problem] = c.by_role;
    auto scores = [](const std::vector<DecisivenessScore>& v) {
        json out = json::array();
        for (const auto& s : v) {
            out.push_back({{"problem", s.problem}, {"role", s.role}, {"p", s.pivots}, {"n", s.appearances},
                           {"score", s.score()}});
        }
        return out;
    };
    auto report = decisiveness(read.transcripts, min_appearances);
    return json{{"debate_stats", stats},
                {"recruitment", recruitment},
                {"decisiveness", scores(report.ranked)},
                {"decisiveness_raw", scores(report.raw)},
                {"corrupt", read.corrupt}}
        .dump();
}

std::string read_transcripts_json(const std::string& path) {
    auto read = read_transcripts(path);
    json out = json::array();
    for (const auto& t : read.transcripts) out.push_back(encode_transcript(t));
    return json{{"transcripts", out}, {"corrupt", read.corrupt}, {"warnings", read.warnings}}.dump();
}

}  // namespace
}  // namespace clinmas

PYBIND11_MODULE(_clinmas, m) {
    using namespace clinmas;
    m.doc() = "Native core of the clinmas debate engine";

    static py::exception<Error> error(m, "Error");
    static py::exception<ConfigError> config_error(m, "ConfigError", error.ptr());
    static py::exception<InvalidArgument> invalid_argument(m, "InvalidArgument", error.ptr());
    static py::exception<CoverageError> coverage_error(m, "CoverageError", error.ptr());
    static py::exception<CaseError> case_error(m, "CaseError", error.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            PyErr_SetString(config_error.ptr(), e.what());
        } catch (const InvalidArgument& e) {
            PyErr_SetString(invalid_argument.ptr(), e.what());
        } catch (const CoverageError& e) {
            PyErr_SetString(coverage_error.ptr(), e.what());
        } catch (const CaseError& e) {
            PyErr_SetString(case_error.ptr(), e.what());
        } catch (const Error& e) {
            PyErr_SetString(error.ptr(), e.what());
        }
    });

    m.def("check_consensus",
          [](const std::vector<std::string>& votes, double threshold) -> std::optional<std::string> {
              std::vector<Choice> v;
              for (const auto& s : votes) {
                  auto c = parse_choice(s);
                  if (!c) throw InvalidArgument("vote must be \"Yes\" or \"No\", got '" + s + "'");
                  v.push_back(*c);
              }
              auto r = check_consensus(v, threshold);
              if (!r) return std::nullopt;
              return std::string(to_string(*r));
          },
          py::arg("votes"), py::arg("threshold"));
    m.def("metrics_json",
          [](std::int64_t tp, std::int64_t tn, std::int64_t fp, std::int64_t fn) {
              return metrics_json(metrics({tp, tn, fp, fn})).dump();
          },
          py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));
    m.def("macro_average_json", [](const std::string& reports) {
        std::vector<MetricsReport> v;
        for (const auto& r : json::parse(reports)) v.push_back(metrics_from(r));
        return metrics_json(macro_average(v)).dump();
    });
    m.def("decisiveness_score", &decisiveness_score, py::arg("pivots"), py::arg("appearances"));
    m.def("mentions_problem",
          [](const std::string& text, const std::string& problem, const std::vector<std::string>& aliases) {
              return mentions_problem(text, ProblemLabel::make(problem, aliases));
          },
          py::arg("text"), py::arg("problem"), py::arg("aliases") = std::vector<std::string>{});
    m.def("default_aliases_json", [] {
        json out = json::object();
        for (const auto& l : default_aliases()) out[l.canonical_name] = l.aliases;
        return out.dump();
    });
    m.def("curated_problems", [] { return curated_problems(); });
    m.def("default_problems", [] { return default_problems(); });
    m.def("curate_json", &curate, py::arg("corpus"), py::arg("problems"), py::arg("aliases"));
    m.def("run_scripted_json", &run_scripted, py::arg("corpus"), py::arg("tasks"), py::arg("config"),
          py::arg("script"), py::arg("out_dir"));
    m.def("evaluate_json", &evaluate, py::arg("gold"), py::arg("predictions"));
    m.def("analyze_json", &analyze, py::arg("transcripts"), py::arg("gold"), py::arg("min_appearances"));
    m.def("read_transcripts_json", &read_transcripts_json, py::arg("path"));
    m.attr("template_version") = std::string(PromptTemplates::kVersion);
}
