#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "regrel/corpus.hpp"
#include "regrel/crowd.hpp"
#include "regrel/evaluation.hpp"
#include "regrel/process.hpp"

namespace regrel::testing {

using json = nlohmann::json;

/// Composition of a use case: group A split by type, then B and C, then the process shape.
struct UseCaseShape {
    std::string id;
    std::string domain;
    std::size_t compliance = 0;
    std::size_t informative = 0;
    std::size_t group_b = 0;
    std::size_t group_c = 0;
    std::size_t subprocesses = 0;
    std::size_t tasks = 0;
};

/// Insurance claims handling: 21 + 28 group A, 220 B, 220 C; 7 sub-processes, 31 tasks.
UseCaseShape insurance_shape();
/// Retail banking: 24 + 7 group A, 140 B, 140 C; 7 sub-processes, 19 tasks.
UseCaseShape banking_shape();

/// Generated stand-in for a published study set, in the on-disk formats.
struct SyntheticUseCase {
    UseCaseShape shape;
    std::vector<json> documents;  // documents.jsonl
    std::vector<json> study_set;  // study_set.jsonl
    json process;                 // process.json
    std::vector<json> gold;       // gold.jsonl
};

/// Deterministic for a given shape and seed. Group A paragraphs each target one
/// task and echo its vocabulary; B paragraphs use business vocabulary only; C
/// paragraphs come from unrelated external documents.
SyntheticUseCase make_use_case(const UseCaseShape& shape, std::uint64_t seed = 7);

/// All group A paragraphs plus the first `group_b` and `group_c` of the others.
SyntheticUseCase crowd_subset(const SyntheticUseCase& full, std::size_t group_b, std::size_t group_c);

StudySet study_set_of(const SyntheticUseCase& uc);
ProcessModel model_of(const SyntheticUseCase& uc);
GoldStandard gold_of(const SyntheticUseCase& uc);
std::map<std::string, RegulatoryDocument> documents_of(const SyntheticUseCase& uc);

/// Writes documents.jsonl, study_set.jsonl, process.json and gold.jsonl.
void write_use_case(const SyntheticUseCase& uc, const std::filesystem::path& dir);

/// A hand-sized model: P with sub-processes S1 (tasks T1, T2, event E1) and S2 (task T3).
ProcessModel small_model();

/// One paragraph ("p") judged by three workers on the small model. w1 and w2
/// pass every check; w3 clicked the forbidden option in both phases.
///   phase 1: w1 relevant {S1}, w2 relevant {S1, S2}, w3 not relevant
///   phase 2: w1 {T1 informative}, w2 {T1 compliance, T3 informative}, w3 {T2 compliance}
std::vector<WorkerSubmission> three_worker_submissions();

/// Chat replies that must all be rejected by the reply parser for the small model.
std::vector<std::string> malformed_replies();

/// Temporary directory removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& prefix = "regrel-test");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return m_path; }
    std::filesystem::path operator/(const std::string& name) const { return m_path / name; }

  private:
    std::filesystem::path m_path;
};

}  // namespace regrel::testing
