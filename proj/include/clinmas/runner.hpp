#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "clinmas/dataset.hpp"
#include "clinmas/domain.hpp"
#include "clinmas/gateway.hpp"
#include "clinmas/prompts.hpp"

namespace clinmas {

struct BatchOptions {
    RunConfig config;
    const PromptTemplates* templates = nullptr;
    std::filesystem::path transcripts_path;
    std::filesystem::path errors_path;
    // Checked between cases. Once set, no new case starts; in-flight cases
    // finish and are written.
    const std::atomic<bool>* stop = nullptr;
    std::function<void(const std::string&)> on_warning;
};

struct BatchSummary {
    int total = 0;
    int skipped = 0;  // already present in the transcript file
    int completed = 0;
    int case_errors = 0;
    int not_started = 0;  // left over after an interrupt
    int corrupt_existing = 0;
    bool interrupted = false;
};

/// Runs every task not yet in `transcripts_path`, at most
/// max_concurrent_requests cases at a time. Transcripts are appended in task
/// order whatever the completion order, so identical inputs give identical
/// bytes. Failed cases are logged to `errors_path` and counted.
/// Throws ConfigError before any call is made if the configuration cannot
/// serve some task (unknown problem, no static roles for a static layout).
BatchSummary run_batch(Gateway& gateway, const std::vector<TaskInstance>& tasks,
                       const std::vector<SoapNote>& notes, const std::vector<ProblemLabel>& labels,
                       const BatchOptions& options);

}  // namespace clinmas
