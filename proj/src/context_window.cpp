#include "clinmas/context_window.hpp"

#include <numeric>

namespace clinmas {

void History::append(ChatMessage m) {
    tokens_.push_back(counter_->count_tokens(m.content));
    messages_.push_back(std::move(m));
}

void History::replace_content(std::size_t index, std::string content) {
    tokens_.at(index) = counter_->count_tokens(content);
    messages_.at(index).content = std::move(content);
}

std::size_t History::total_tokens() const noexcept { return std::accumulate(tokens_.begin(), tokens_.end(), std::size_t{0}); }

namespace {

constexpr const char* kSummarizerInstruction =
    "You condense clinical discussion text. Summarize the message you are given so that every clinical fact, "
    "measurement, medication, and stated conclusion is preserved. Do not add interpretation. Reply with a JSON "
    "object {\"summary\": \"...\"}.";

}  // namespace

CompactionResult maybe_compact(const History& history, const CompactionPolicy& policy, Gateway& summarizer,
                               const CallTag& tag) {
    if (policy.context_limit_tokens <= 0) throw InvalidArgument("context limit must be positive");
    if (!(policy.threshold > 0.0 && policy.threshold < 1.0)) throw InvalidArgument("compaction threshold must lie in (0, 1)");

    const double budget = policy.threshold * policy.context_limit_tokens;
    CompactionResult result{history, 0, false, {}};
    if (static_cast<double>(history.total_tokens()) <= budget) return result;

    std::vector<bool> done(history.size(), false);
    while (static_cast<double>(result.history.total_tokens()) > budget) {
        std::size_t longest = history.size();
        for (std::size_t i = 0; i < result.history.size(); ++i) {
            if (done[i]) continue;
            if (longest == history.size() || result.history.token_counts()[i] > result.history.token_counts()[longest]) {
                longest = i;
            }
        }
        if (longest == history.size()) {
            result.warning = true;
            result.detail = "every message summarized once; history still over the compaction threshold";
            return result;
        }
        done[longest] = true;

        CompletionRequest req;
        req.messages = {{ChatMessage::Role::System, kSummarizerInstruction},
                        {ChatMessage::Role::User, result.history.messages()[longest].content}};
        req.temperature = policy.summarizer_temperature;
        req.schema = SchemaId::Summary;
        req.max_output_tokens = policy.max_output_tokens;
        req.tag = tag;
        req.tag.purpose = "compaction";
        try {
            auto summary = summarizer.complete(req).summary();
            result.history.replace_content(longest, std::move(summary));
            ++result.summarized;
        } catch (const Error& e) {
            return {history, 0, true, std::string("summarizer failed: ") + e.what()};
        }
    }
    return result;
}

}  // namespace clinmas
