#include "clinmas/persistence.hpp"

#include <sstream>

#include "clinmas/codec.hpp"
#include "clinmas/hashing.hpp"

namespace clinmas {

using nlohmann::json;

std::string encode_line(const json& record) {
    const auto payload = record.dump();
    return json{{"checksum", sha256_hex(payload)}, {"record", record}}.dump();
}

RecordWriter::RecordWriter(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // A file cut off mid-record (killed run) gets a newline first, so the next
    // record starts on its own line and only the damaged one is lost.
    bool needs_newline = false;
    if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
        std::ifstream in(path, std::ios::binary);
        in.seekg(-1, std::ios::end);
        char last = '\n';
        in.get(last);
        needs_newline = last != '\n';
    }
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw Error("cannot open " + path.string() + " for appending");
    if (needs_newline) out_ << '\n';
}

void RecordWriter::append(const json& record) {
    const auto line = encode_line(record);
    std::lock_guard lock(mu_);
    out_ << line << '\n';
    out_.flush();
    if (!out_) throw Error("write to " + path_.string() + " failed");
}

RecordReadResult read_records(const std::filesystem::path& path) {
    RecordReadResult out;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto where = path.filename().string() + ":" + std::to_string(lineno) + ": ";
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("checksum") || !j.contains("record") ||
            !j["checksum"].is_string()) {
            ++out.corrupt;
            out.warnings.push_back(where + "unreadable record skipped");
            continue;
        }
        if (sha256_hex(j["record"].dump()) != j["checksum"].get<std::string>()) {
            ++out.corrupt;
            out.warnings.push_back(where + "checksum mismatch, record skipped");
            continue;
        }
        out.records.push_back(std::move(j["record"]));
    }
    return out;
}

void TranscriptWriter::write(const CaseTranscript& t) { writer_.append(encode_transcript(t)); }

TranscriptReadResult read_transcripts(const std::filesystem::path& path) {
    auto raw = read_records(path);
    TranscriptReadResult out;
    out.corrupt = raw.corrupt;
    out.warnings = std::move(raw.warnings);
    for (std::size_t i = 0; i < raw.records.size(); ++i) {
        try {
            auto t = decode_transcript(raw.records[i]);
            auto problems = check_transcript(t);
            if (!problems.empty()) {
                ++out.corrupt;
                out.warnings.push_back(path.filename().string() + ": transcript (" + t.note_id + ", " + t.problem +
                                       ") violates invariants: " + problems.front());
                continue;
            }
            out.transcripts.push_back(std::move(t));
        } catch (const DecodeError& e) {
            ++out.corrupt;
            out.warnings.push_back(path.filename().string() + ": undecodable transcript: " + e.what());
        }
    }
    return out;
}

std::set<InstanceKey> completed_instances(const std::filesystem::path& path) {
    std::set<InstanceKey> out;
    if (!std::filesystem::exists(path)) return out;
    for (const auto& t : read_transcripts(path).transcripts) out.emplace(t.note_id, t.problem);
    return out;
}

json RunManifest::to_json() const {
    return {{"config", encode_config(config)},
            {"config_id", config.config_id()},
            {"corpus_hash", corpus_hash},
            {"task_set_hash", task_set_hash},
            {"template_hash", template_hash},
            {"template_version", template_version},
            {"backend", backend},
            {"model", model},
            {"instances", instances}};
}

RunManifest RunManifest::from_json(const json& j) {
    RunManifest m;
    m.config = decode_config(j.at("config"));
    m.corpus_hash = j.at("corpus_hash").get<std::string>();
    m.task_set_hash = j.at("task_set_hash").get<std::string>();
    m.template_hash = j.at("template_hash").get<std::string>();
    m.template_version = j.at("template_version").get<std::string>();
    m.backend = j.at("backend").get<std::string>();
    m.model = j.at("model").get<std::string>();
    m.instances = j.at("instances").get<int>();
    return m;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
    RecordWriter(path).append(manifest.to_json());
}

std::vector<RunManifest> read_manifests(const std::filesystem::path& path) {
    std::vector<RunManifest> out;
    for (const auto& r : read_records(path).records) out.push_back(RunManifest::from_json(r));
    return out;
}

PredictionMap read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    PredictionMap out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = json::parse(line);
            auto c = parse_choice(j.at("prediction").get<std::string>());
            if (!c) throw InvalidArgument("prediction must be \"Yes\" or \"No\"");
            InstanceKey key{j.at("note_id").get<std::string>(), normalize_role(j.at("problem").get<std::string>())};
            if (!out.emplace(key, *c).second) throw InvalidArgument("duplicate prediction");
        } catch (const std::exception& e) {
            throw InvalidArgument(path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_predictions(std::ostream& out, const PredictionMap& predictions) {
    for (const auto& [key, c] : predictions) {
        out << json{{"note_id", key.first}, {"problem", key.second}, {"prediction", to_string(c)}}.dump() << '\n';
    }
}

PredictionMap load_predictions(const std::filesystem::path& path, int* corrupt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::string line;
    bool envelope = false;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto j = json::parse(line, nullptr, false);
        envelope = j.is_discarded() || (j.is_object() && j.contains("checksum"));
        break;
    }
    if (!envelope) return read_predictions(path);
    auto r = read_transcripts(path);
    if (corrupt) *corrupt = r.corrupt;
    return predictions_from(r.transcripts);
}

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

}  // namespace clinmas
