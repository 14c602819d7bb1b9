#pragma once

#include "patch_actor/actionhead.hpp"
#include "patch_actor/candidates.hpp"
#include "patch_actor/evalharness.hpp"
#include "patch_actor/synthgui.hpp"
#include "patch_actor/verifier.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace patch_actor {

inline constexpr const char* kRecordsSchema = "patch-actor/records/v1";
inline constexpr const char* kVerifierDataSchema = "patch-actor/verifier-data/v1";
inline constexpr const char* kModelSchema = "patch-actor/model/v1";
inline constexpr const char* kVerifierSchema = "patch-actor/verifier/v1";
inline constexpr const char* kReportSchema = "patch-actor/report/v1";
inline constexpr const char* kCandidatesSchema = "patch-actor/candidates/v1";
inline constexpr const char* kSelectionsSchema = "patch-actor/selections/v1";

/// Tolerant JSONL read: unparseable or invalid lines are skipped and
/// reported, mirroring the evaluation contract for malformed records.
struct RecordsFile {
    std::vector<GroundingRecord> records;
    std::vector<std::size_t> skipped_lines; // 0-based line numbers past the header
};

/// Grounding datasets: a schema header line, then one record object per
/// line. Synthetic records carry the screen recipe (seed, grid, elements);
/// external ones carry an image path plus precomputed features.
void write_records(const std::string& path, const std::vector<GroundingRecord>& records);
RecordsFile read_records(const std::string& path);

struct VerifierDataFile {
    std::vector<VerifierExample> examples;
    std::vector<std::size_t> skipped_lines;
};

void write_verifier_examples(const std::string& path,
                             const std::vector<VerifierExample>& examples);
VerifierDataFile read_verifier_examples(const std::string& path);

/// Model persistence: versioned JSON with flat row-major parameter arrays.
/// Decimal floats are written shortest-round-trip, so load(save(m)) == m
/// bit for bit.
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

void save_verifier(const std::string& path, const ToyVerifier& verifier);
ToyVerifier load_verifier(const std::string& path);

/// One "epoch,mean_loss" row per epoch after a header line.
void write_loss_csv(const std::string& path, const std::vector<Scalar>& epoch_mean_loss);

/// Candidate/selection/report JSON payloads, exposed for tests; the CLI
/// writes them with ids attached.
std::string candidates_json(const CandidateSet& candidates);
std::string selection_json(const SelectionResult& selection);
std::string report_json(const EvalReport& report);

void write_report(const std::string& path, const EvalReport& report);

/// FNV-1a over the raw file bytes; FileError when unreadable.
std::uint64_t file_digest(const std::string& path);

} // namespace patch_actor
