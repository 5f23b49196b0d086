#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "clinmas/gateway.hpp"

namespace clinmas {

/// An agent's conversation with a cached token count per message.
class History {
public:
    explicit History(const Gateway& counter) : counter_(&counter) {}

    void append(ChatMessage m);
    /// Replaces a message's content, keeping its position and role.
    void replace_content(std::size_t index, std::string content);

    const std::vector<ChatMessage>& messages() const noexcept { return messages_; }
    const std::vector<std::size_t>& token_counts() const noexcept { return tokens_; }
    std::size_t total_tokens() const noexcept;
    std::size_t size() const noexcept { return messages_.size(); }

private:
    const Gateway* counter_;
    std::vector<ChatMessage> messages_;
    std::vector<std::size_t> tokens_;
};

struct CompactionPolicy {
    int context_limit_tokens = 8192;
    double threshold = 0.7;
    double summarizer_temperature = 0.1;
    int max_output_tokens = 1024;
};

struct CompactionResult {
    History history;
    int summarized = 0;    // messages replaced by a summary
    bool warning = false;  // still over threshold, or the summarizer failed
    std::string detail;
};

/// Summarizes the longest message (earliest on ties) until the history fits
/// under threshold * limit. Each message is summarized at most once per call.
/// On summarizer failure the input history is returned untouched.
CompactionResult maybe_compact(const History& history, const CompactionPolicy& policy, Gateway& summarizer,
                               const CallTag& tag);

}  // namespace clinmas
