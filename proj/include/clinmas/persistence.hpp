#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "clinmas/domain.hpp"
#include "clinmas/evaluation.hpp"

namespace clinmas {

// Storage is line-delimited: each line is {"checksum": <sha256 of the
// record's compact serialization>, "record": {...}}. Files are only ever
// appended to.

std::string encode_line(const nlohmann::json& record);

/// Appends checksummed records to a file. One writer per file; safe to call
/// from several threads.
class RecordWriter {
public:
    explicit RecordWriter(const std::filesystem::path& path);

    void append(const nlohmann::json& record);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mu_;
    std::ofstream out_;
};

struct RecordReadResult {
    std::vector<nlohmann::json> records;
    int corrupt = 0;  // unparseable lines or checksum mismatches, skipped
    std::vector<std::string> warnings;
};

RecordReadResult read_records(const std::filesystem::path& path);

class TranscriptWriter {
public:
    explicit TranscriptWriter(const std::filesystem::path& path) : writer_(path) {}
    void write(const CaseTranscript& t);

private:
    RecordWriter writer_;
};

struct TranscriptReadResult {
    std::vector<CaseTranscript> transcripts;
    int corrupt = 0;  // damaged lines plus records failing their invariants
    std::vector<std::string> warnings;
};

/// Reads every intact transcript. Records that fail to decode or violate a
/// transcript invariant are skipped, counted, and described in `warnings`.
TranscriptReadResult read_transcripts(const std::filesystem::path& path);

/// (note_id, problem) pairs already present in a transcript file; empty when
/// the file does not exist.
std::set<InstanceKey> completed_instances(const std::filesystem::path& path);

struct RunManifest {
    RunConfig config;
    std::string corpus_hash;
    std::string task_set_hash;
    std::string template_hash;
    std::string template_version;
    std::string backend;
    std::string model;
    int instances = 0;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
    bool operator==(const RunManifest&) const = default;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
std::vector<RunManifest> read_manifests(const std::filesystem::path& path);

/// Predictions file: one {"note_id", "problem", "prediction": "Yes"|"No"} per
/// line, plain (no checksum envelope).
PredictionMap read_predictions(const std::filesystem::path& path);
void write_predictions(std::ostream& out, const PredictionMap& predictions);

/// Final choices from either a transcript file or a predictions file, told
/// apart by the first record. Corrupt transcript lines are skipped and
/// counted in `corrupt` when given.
PredictionMap load_predictions(const std::filesystem::path& path, int* corrupt = nullptr);

/// Sha-256 of a file's bytes.
std::string file_hash(const std::filesystem::path& path);

}  // namespace clinmas
