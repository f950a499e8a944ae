#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "regrel/evaluation.hpp"
#include "regrel/process.hpp"

namespace regrel {

enum class CrowdPhase { phase1, phase2 };

std::string_view to_string(CrowdPhase phase);
CrowdPhase crowd_phase_from_string(std::string_view text);

/// Phase 1: is the paragraph relevant for the process, and for which sub-processes.
struct Phase1Answer {
    bool process_relevant = false;
    std::set<std::string> subprocess_ids;

    bool operator==(const Phase1Answer&) const = default;
};

/// Phase 2: relevant tasks and events with their type (informative or compliance).
struct Phase2Answer {
    std::map<std::string, RelevanceType> nodes;

    bool operator==(const Phase2Answer&) const = default;
};

struct WorkerSubmission {
    std::string worker_id;
    std::string para_id;
    CrowdPhase phase = CrowdPhase::phase1;
    std::optional<Phase1Answer> phase1;
    std::optional<Phase2Answer> phase2;
    std::string justification;
    std::pair<bool, bool> test_answers{true, true};  // correctness of the two test questions
    bool clicked_forbidden_option = false;
    std::set<std::string> selected_options;
    std::string received_at;  // ISO 8601; compared as text

    bool operator==(const WorkerSubmission&) const = default;
};

json to_json(const WorkerSubmission& submission);
/// Enforces that exactly the answer matching the phase is present.
WorkerSubmission submission_from_json(const json& j);
std::vector<WorkerSubmission> load_submissions(const std::vector<json>& records);

struct QualityFlags {
    bool passed_test_questions = false;
    bool passed_attention = false;
    bool passed_semantic_dependency = false;

    bool passed_all() const { return passed_test_questions && passed_attention && passed_semantic_dependency; }
};

struct QualityRules {
    std::string not_relevant_option = "Not relevant";
    /// Further option pairs that must not be selected together.
    std::vector<std::pair<std::string, std::string>> illegal_pairs;
};

QualityFlags check_quality(const WorkerSubmission& submission, const QualityRules& rules = {});

enum class AggregationStrategy {
    /// Vote over every worker.
    unfiltered,
    /// The earliest submission that passed every check, taken verbatim.
    qlt_filter,
    /// Union over workers that passed every check.
    qlt_comb,
};

std::string_view to_string(AggregationStrategy strategy);
AggregationStrategy aggregation_strategy_from_string(std::string_view text);

enum class VoteRule {
    /// Relevant when at least half of the votes say so (ties count as relevant).
    majority,
    /// Relevant when the share of relevant votes reaches `proportion_threshold`.
    proportion,
};

struct AggregateOptions {
    VoteRule vote_rule = VoteRule::majority;
    double proportion_threshold = 0.5;
    std::size_t target_workers = 3;
    QualityRules quality;
};

struct CrowdAggregate {
    std::string para_id;
    std::optional<LabelSet> labels;  // empty: no qualified data
    std::vector<std::string> warnings;
};

/// Aggregates the submissions of one paragraph. Throws ValidationError when
/// there are none or when they belong to different paragraphs. Phase-2
/// submissions are ignored unless the phase-1 aggregate is relevant. Unknown
/// node ids are dropped with a warning. The result is closed upward.
CrowdAggregate aggregate(std::span<const WorkerSubmission> submissions, AggregationStrategy strategy,
                         const ProcessModel& model, const AggregateOptions& options = {});

/// Groups by paragraph and aggregates each one. Results are ordered by para_id.
std::vector<CrowdAggregate> aggregate_all(const std::vector<WorkerSubmission>& submissions,
                                          AggregationStrategy strategy, const ProcessModel& model,
                                          const AggregateOptions& options = {});

PredictionRecord to_prediction(const CrowdAggregate& aggregate, AggregationStrategy strategy);

}  // namespace regrel
