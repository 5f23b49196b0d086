#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "clinmas/dataset.hpp"
#include "clinmas/domain.hpp"

namespace clinmas {

using InstanceKey = std::pair<std::string, std::string>;  // (note_id, problem)
using PredictionMap = std::map<InstanceKey, Choice>;

/// Raised when predictions and gold labels do not cover the same instances.
class CoverageError : public Error {
public:
    CoverageError(const std::string& what, std::vector<InstanceKey> missing, std::vector<InstanceKey> unknown)
        : Error(what), missing_(std::move(missing)), unknown_(std::move(unknown)) {}
    const std::vector<InstanceKey>& missing() const noexcept { return missing_; }
    const std::vector<InstanceKey>& unknown() const noexcept { return unknown_; }

private:
    std::vector<InstanceKey> missing_;
    std::vector<InstanceKey> unknown_;
};

/// Confusion counts per problem. Throws CoverageError on any gap or on a
/// prediction for an instance absent from the gold set.
std::map<std::string, ConfusionCounts> tally(const PredictionMap& predictions, const std::vector<TaskInstance>& gold);

/// Metrics with 0/0 kept distinct from 0.0 as std::nullopt.
struct MetricsReport {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> specificity;
    std::optional<double> f1;
    // Macro averages only: how many inputs were undefined and left out.
    int excluded_precision = 0;
    int excluded_recall = 0;
    int excluded_specificity = 0;
    int excluded_f1 = 0;

    bool any_excluded() const noexcept {
        return excluded_precision + excluded_recall + excluded_specificity + excluded_f1 > 0;
    }
};

MetricsReport metrics(const ConfusionCounts& c);

/// Unweighted mean per metric over the defined values. Throws
/// InvalidArgument on an empty list.
MetricsReport macro_average(const std::vector<MetricsReport>& reports);

enum class Bucket : std::uint8_t { BothCorrect, MasOnlyCorrect, BaselineOnlyCorrect, BothWrong };

std::string_view to_string(Bucket b) noexcept;

struct BucketCounts {
    int both_correct = 0;
    int mas_only_correct = 0;
    int baseline_only_correct = 0;
    int both_wrong = 0;

    int total() const noexcept { return both_correct + mas_only_correct + baseline_only_correct + both_wrong; }
};

struct BucketResult {
    std::map<InstanceKey, Bucket> per_instance;
    std::map<std::string, BucketCounts> per_problem;
};

BucketResult bucket_outcomes(const PredictionMap& mas, const PredictionMap& baseline,
                             const std::vector<TaskInstance>& gold);

/// Final choices keyed by (note_id, problem).
PredictionMap predictions_from(const std::vector<CaseTranscript>& transcripts);

/// Formats a metric for display: three decimals, or "NA" when undefined.
std::string format_metric(const std::optional<double>& v);

struct MetricsRow {
    std::string problem;
    std::string method;
    std::optional<ConfusionCounts> counts;  // absent for macro rows
    MetricsReport report;
};

/// Machine-readable table at full precision ("NA" for undefined).
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
/// Human-readable table rounded to three decimals.
void print_metrics_table(std::ostream& out, const std::vector<MetricsRow>& rows);
void write_buckets_csv(std::ostream& out, const BucketResult& buckets);

}  // namespace clinmas
