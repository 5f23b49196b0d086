#pragma once

// JSON encodings of the domain types. Every decode_* is the exact inverse of
// the matching encode_* and throws DecodeError on malformed input.

#include <nlohmann/json.hpp>

#include "clinmas/domain.hpp"

namespace clinmas {

class DecodeError : public Error {
public:
    using Error::Error;
};

using nlohmann::json;

json encode_verdict(const Verdict& v);
Verdict decode_verdict(const json& j);

json encode_role(const AgentRole& r);
AgentRole decode_role(const json& j);

json encode_turn(const AgentTurn& t);
AgentTurn decode_turn(const json& j);

json encode_panel(const PanelRecord& p);
PanelRecord decode_panel(const json& j);

json encode_transcript(const CaseTranscript& t);
CaseTranscript decode_transcript(const json& j);

json encode_config(const RunConfig& c);
/// Fields absent from the document keep their defaults in `base`.
RunConfig decode_config(const json& j, RunConfig base = {});

json encode_note(const SoapNote& n);

}  // namespace clinmas
