#include "clinmas/evaluation.hpp"

#include <cstdio>
#include <iomanip>
#include <set>
#include <sstream>

namespace clinmas {

namespace {

std::optional<double> ratio(std::int64_t num, std::int64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

std::string describe(const std::vector<InstanceKey>& keys) {
    std::string out;
    for (std::size_t i = 0; i < keys.size() && i < 10; ++i) {
        out += (i ? ", " : "") + std::string("(") + keys[i].first + ", " + keys[i].second + ")";
    }
    if (keys.size() > 10) out += ", ... " + std::to_string(keys.size() - 10) + " more";
    return out;
}

void check_coverage(const PredictionMap& predictions, const std::vector<TaskInstance>& gold, const char* which) {
    std::set<InstanceKey> gold_keys;
    std::vector<InstanceKey> missing, unknown;
    for (const auto& g : gold) {
        gold_keys.emplace(g.note_id, g.problem);
        if (!predictions.count({g.note_id, g.problem})) missing.emplace_back(g.note_id, g.problem);
    }
    for (const auto& [key, _] : predictions) {
        if (!gold_keys.count(key)) unknown.push_back(key);
    }
    if (missing.empty() && unknown.empty()) return;
    std::string msg = std::string(which) + " predictions do not match the gold set.";
    if (!missing.empty()) msg += " Missing " + std::to_string(missing.size()) + ": " + describe(missing) + ".";
    if (!unknown.empty()) msg += " Unknown " + std::to_string(unknown.size()) + ": " + describe(unknown) + ".";
    throw CoverageError(msg, std::move(missing), std::move(unknown));
}

std::string full(const std::optional<double>& v) {
    if (!v) return "NA";
    std::ostringstream ss;
    ss << std::setprecision(17) << *v;
    return ss.str();
}

}  // namespace

std::map<std::string, ConfusionCounts> tally(const PredictionMap& predictions, const std::vector<TaskInstance>& gold) {
    check_coverage(predictions, gold, "Scored");
    std::map<std::string, ConfusionCounts> out;
    for (const auto& g : gold) {
        auto& c = out[g.problem];
        const Choice pred = predictions.at({g.note_id, g.problem});
        if (pred == Choice::Yes) (g.gold == Choice::Yes ? c.tp : c.fp)++;
        else (g.gold == Choice::No ? c.tn : c.fn)++;
    }
    return out;
}

MetricsReport metrics(const ConfusionCounts& c) {
    MetricsReport r;
    r.precision = ratio(c.tp, c.tp + c.fp);
    r.recall = ratio(c.tp, c.tp + c.fn);
    r.specificity = ratio(c.tn, c.tn + c.fp);
    if (r.precision && r.recall && (*r.precision + *r.recall) > 0) {
        r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
    }
    return r;
}

MetricsReport macro_average(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw InvalidArgument("macro average of zero reports");
    auto mean = [&](auto member, int& excluded) -> std::optional<double> {
        double sum = 0;
        int n = 0;
        for (const auto& r : reports) {
            if (const auto& v = r.*member) {
                sum += *v;
                ++n;
            } else {
                ++excluded;
            }
        }
        if (n == 0) return std::nullopt;
        return sum / n;
    };
    MetricsReport out;
    out.precision = mean(&MetricsReport::precision, out.excluded_precision);
    out.recall = mean(&MetricsReport::recall, out.excluded_recall);
    out.specificity = mean(&MetricsReport::specificity, out.excluded_specificity);
    out.f1 = mean(&MetricsReport::f1, out.excluded_f1);
    return out;
}

std::string_view to_string(Bucket b) noexcept {
    switch (b) {
        case Bucket::BothCorrect: return "both-correct";
        case Bucket::MasOnlyCorrect: return "mas-only-correct";
        case Bucket::BaselineOnlyCorrect: return "baseline-only-correct";
        case Bucket::BothWrong: return "both-wrong";
    }
    return "both-wrong";
}

BucketResult bucket_outcomes(const PredictionMap& mas, const PredictionMap& baseline,
                             const std::vector<TaskInstance>& gold) {
    check_coverage(mas, gold, "MAS");
    check_coverage(baseline, gold, "Baseline");
    BucketResult out;
    for (const auto& g : gold) {
        const InstanceKey key{g.note_id, g.problem};
        const bool mas_ok = mas.at(key) == g.gold;
        const bool base_ok = baseline.at(key) == g.gold;
        Bucket b = mas_ok ? (base_ok ? Bucket::BothCorrect : Bucket::MasOnlyCorrect)
                          : (base_ok ? Bucket::BaselineOnlyCorrect : Bucket::BothWrong);
        out.per_instance[key] = b;
        auto& counts = out.per_problem[g.problem];
        switch (b) {
            case Bucket::BothCorrect: ++counts.both_correct; break;
            case Bucket::MasOnlyCorrect: ++counts.mas_only_correct; break;
            case Bucket::BaselineOnlyCorrect: ++counts.baseline_only_correct; break;
            case Bucket::BothWrong: ++counts.both_wrong; break;
        }
    }
    return out;
}

PredictionMap predictions_from(const std::vector<CaseTranscript>& transcripts) {
    PredictionMap out;
    for (const auto& t : transcripts) {
        if (!out.emplace(InstanceKey{t.note_id, t.problem}, t.final_choice).second) {
            throw InvalidArgument("duplicate transcript for (" + t.note_id + ", " + t.problem + ")");
        }
    }
    return out;
}

std::string format_metric(const std::optional<double>& v) {
    if (!v) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return buf;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << "problem,method,tp,tn,fp,fn,precision,recall,specificity,f1,excluded\n";
    for (const auto& r : rows) {
        out << '"' << r.problem << "\"," << r.method << ',';
        if (r.counts) out << r.counts->tp << ',' << r.counts->tn << ',' << r.counts->fp << ',' << r.counts->fn << ',';
        else out << ",,,,";
        const auto& m = r.report;
        const int excluded = m.excluded_precision + m.excluded_recall + m.excluded_specificity + m.excluded_f1;
        out << full(m.precision) << ',' << full(m.recall) << ',' << full(m.specificity) << ',' << full(m.f1) << ','
            << excluded << '\n';
    }
}

void print_metrics_table(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << std::left << std::setw(26) << "Problem" << std::setw(12) << "Method" << std::right << std::setw(6) << "TP"
        << std::setw(6) << "TN" << std::setw(6) << "FP" << std::setw(6) << "FN" << std::setw(11) << "Precision"
        << std::setw(8) << "Recall" << std::setw(13) << "Specificity" << std::setw(7) << "F1" << '\n';
    for (const auto& r : rows) {
        out << std::left << std::setw(26) << r.problem << std::setw(12) << r.method << std::right;
        if (r.counts) {
            out << std::setw(6) << r.counts->tp << std::setw(6) << r.counts->tn << std::setw(6) << r.counts->fp
                << std::setw(6) << r.counts->fn;
        } else {
            out << std::setw(24) << "";
        }
        out << std::setw(11) << format_metric(r.report.precision) << std::setw(8) << format_metric(r.report.recall)
            << std::setw(13) << format_metric(r.report.specificity) << std::setw(7) << format_metric(r.report.f1);
        if (r.report.any_excluded()) out << "  (undefined inputs excluded)";
        out << '\n';
    }
}

void write_buckets_csv(std::ostream& out, const BucketResult& buckets) {
    out << "problem,bucket,count\n";
    for (const auto& [problem, c] : buckets.per_problem) {
        out << '"' << problem << "\"," << to_string(Bucket::BothCorrect) << ',' << c.both_correct << '\n';
        out << '"' << problem << "\"," << to_string(Bucket::MasOnlyCorrect) << ',' << c.mas_only_correct << '\n';
        out << '"' << problem << "\"," << to_string(Bucket::BaselineOnlyCorrect) << ',' << c.baseline_only_correct
            << '\n';
        out << '"' << problem << "\"," << to_string(Bucket::BothWrong) << ',' << c.both_wrong << '\n';
    }
}

}  // namespace clinmas
