#include "clinmas/runner.hpp"

#include <mutex>
#include <optional>
#include <thread>

#include "clinmas/orchestrator.hpp"
#include "clinmas/persistence.hpp"

namespace clinmas {

namespace {

struct Outcome {
    std::optional<CaseTranscript> transcript;
    std::string error;
};

}  // namespace

BatchSummary run_batch(Gateway& gateway, const std::vector<TaskInstance>& tasks,
                       const std::vector<SoapNote>& notes, const std::vector<ProblemLabel>& labels,
                       const BatchOptions& options) {
    if (!options.templates) throw InvalidArgument("run_batch needs prompt templates");
    options.config.validate();
    const auto& cfg = options.config;

    std::map<std::string, const SoapNote*> by_id;
    for (const auto& n : notes) by_id.emplace(n.note_id, &n);

    std::set<std::string> problems;
    for (const auto& t : tasks) problems.insert(t.problem);
    for (const auto& p : problems) {
        try {
            find_label(labels, p);
        } catch (const InvalidArgument&) {
            throw ConfigError("no alias entry for problem '" + p + "'");
        }
        if (cfg.composition_mode == CompositionMode::StaticDynamic ||
            cfg.composition_mode == CompositionMode::Hybrid) {
            static_roles_for(p);
        }
    }

    BatchSummary summary;
    summary.total = static_cast<int>(tasks.size());

    std::set<InstanceKey> done;
    if (std::filesystem::exists(options.transcripts_path)) {
        auto existing = read_transcripts(options.transcripts_path);
        summary.corrupt_existing = existing.corrupt;
        for (const auto& w : existing.warnings) {
            if (options.on_warning) options.on_warning(w);
        }
        for (const auto& t : existing.transcripts) done.emplace(t.note_id, t.problem);
    }

    std::vector<const TaskInstance*> pending;
    std::set<InstanceKey> queued;
    for (const auto& t : tasks) {
        InstanceKey key{t.note_id, t.problem};
        if (done.count(key)) {
            ++summary.skipped;
        } else if (queued.insert(key).second) {
            pending.push_back(&t);
        }
    }

    TranscriptWriter writer(options.transcripts_path);
    RecordWriter errors(options.errors_path);

    std::mutex mu;
    std::vector<std::optional<Outcome>> results(pending.size());
    std::size_t next_write = 0;
    std::atomic<std::size_t> next_task{0};
    std::atomic<bool> stopped{false};

    auto flush = [&](Outcome& o, const TaskInstance& task) {
        if (o.transcript) {
            writer.write(*o.transcript);
            ++summary.completed;
        } else {
            errors.append({{"note_id", task.note_id}, {"problem", task.problem}, {"error", o.error}});
            ++summary.case_errors;
        }
    };

    auto worker = [&] {
        Manager manager(gateway, cfg, *options.templates);
        for (;;) {
            if (options.stop && options.stop->load()) {
                stopped = true;
                return;
            }
            const std::size_t i = next_task.fetch_add(1);
            if (i >= pending.size()) return;
            const auto& task = *pending[i];
            Outcome o;
            try {
                auto it = by_id.find(task.note_id);
                if (it == by_id.end()) throw CaseError("note '" + task.note_id + "' is not in the corpus");
                o.transcript = manager.run_case(*it->second, find_label(labels, task.problem));
            } catch (const std::exception& e) {
                o.error = e.what();
            }
            std::lock_guard lock(mu);
            results[i] = std::move(o);
            while (next_write < results.size() && results[next_write]) {
                flush(*results[next_write], *pending[next_write]);
                results[next_write].reset();
                ++next_write;
            }
        }
    };

    const int n_workers = std::max(1, std::min<int>(cfg.max_concurrent_requests, static_cast<int>(pending.size())));
    std::vector<std::thread> threads;
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    // After an interrupt there can be gaps; keep whatever finished past them.
    for (std::size_t i = next_write; i < results.size(); ++i) {
        if (results[i]) flush(*results[i], *pending[i]);
        else ++summary.not_started;
    }
    summary.interrupted = stopped.load();
    return summary;
}

}  // namespace clinmas
