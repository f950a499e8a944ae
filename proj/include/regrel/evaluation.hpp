#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "regrel/corpus.hpp"
#include "regrel/process.hpp"
#include "regrel/relevance.hpp"

namespace regrel {

/// Predicted labels keyed by para_id.
using Predictions = std::map<std::string, LabelSet>;

// ---------------------------------------------------------------------------
// Propagation closure

/// Lifts every ancestor of a relevant node to relevant. A lifted ancestor takes
/// the strongest type among its relevant children; ancestors that are already
/// relevant keep their own type. Never removes a label. Idempotent.
/// Throws NotFoundError for node ids that are not in the model, and
/// ValidationError for ids filed under the wrong level.
LabelSet normalize_labels(const LabelSet& labels, const ProcessModel& model);

Predictions normalize_predictions(const Predictions& predictions, const ProcessModel& model);

/// Node ids (or "level1") whose relevance is not implied upward. Empty when closed.
std::vector<std::string> closure_violations(const LabelSet& labels, const ProcessModel& model);

// ---------------------------------------------------------------------------
// Gold standard

struct GoldEntry {
    LabelSet labels;
    /// Annotator note per label key: "level1" or a node id.
    std::map<std::string, std::string> provenance;

    bool operator==(const GoldEntry&) const = default;
};

struct GoldStandard {
    std::string use_case_id;
    std::map<std::string, GoldEntry> labels;  // para_id -> entry

    bool operator==(const GoldStandard&) const = default;
};

/// Parses `gold.jsonl` records and rejects golds that break propagation
/// closure or, when `groups` is given, group consistency (group A iff level 1
/// relevant).
GoldStandard load_gold(std::string use_case_id, const std::vector<json>& records, const ProcessModel& model,
                       const std::map<std::string, Group>* groups = nullptr);

/// Checks closure and group consistency of an in-memory gold standard.
void validate_gold(const GoldStandard& gold, const ProcessModel& model,
                   const std::map<std::string, Group>* groups = nullptr);

std::vector<json> gold_to_jsonl(const GoldStandard& gold);

std::map<std::string, Group> groups_of(const StudySet& set);

/// Level-0 (business) relevance, derived from the group tag.
inline bool business_relevant(Group group) { return group != Group::C; }

// ---------------------------------------------------------------------------
// Predictions files

struct PredictionRecord {
    std::string para_id;
    std::optional<LabelSet> labels;  // empty when the method had no usable data ("no_qualified_data")
    std::string method;
    std::string config_digest;
};

json to_json(const PredictionRecord& record);
PredictionRecord prediction_from_json(const json& j);

struct LoadedPredictions {
    Predictions labels;
    std::vector<std::string> excluded;  // para_ids reported without labels
    std::string method;
};

LoadedPredictions load_predictions(const std::vector<json>& records);

// ---------------------------------------------------------------------------
// Metrics

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    double accuracy() const;
    /// Nothing when tp + fp == 0.
    std::optional<double> precision() const;
    /// Nothing when tp + fn == 0.
    std::optional<double> recall() const;

    ConfusionCounts& operator+=(const ConfusionCounts& other);
    bool operator==(const ConfusionCounts&) const = default;
};

/// Which (paragraph, node) pairs count at levels 2 and 3.
enum class PairUnit {
    /// Paragraphs gold-relevant at level 1 plus paragraphs predicted relevant at the level.
    restricted,
    all_paragraphs,
};

std::string_view to_string(PairUnit unit);

/// Standard definitions: TP gold-relevant & predicted relevant, FP gold-irrelevant
/// & predicted relevant, TN both irrelevant, FN gold-relevant & predicted
/// irrelevant. Informative and compliance both count as relevant. Throws
/// ValidationError listing para_ids when predictions and gold cover different sets.
ConfusionCounts confusion(const Predictions& predictions, const GoldStandard& gold, const ProcessModel& model,
                          Level level, PairUnit unit = PairUnit::restricted);

struct GroupAccuracy {
    std::size_t correct = 0;
    std::size_t total = 0;
    std::optional<double> accuracy() const;
};

/// Level-1 accuracy per group. Paragraphs without a group are ignored.
std::map<Group, GroupAccuracy> group_accuracy(const Predictions& predictions, const GoldStandard& gold,
                                              const std::map<std::string, Group>& groups);

struct TypeAccuracy {
    std::size_t matched = 0;
    std::size_t gold_relevant = 0;
    std::optional<double> value() const;
};

/// Among gold-relevant paragraphs at level 1, the fraction whose predicted
/// level-1 type equals the gold type. Predicted irrelevant counts as a mismatch.
TypeAccuracy type_accuracy(const Predictions& predictions, const GoldStandard& gold);

/// Half-up rounding of num/den to `decimals` places, computed exactly.
double round_half_up(std::uint64_t num, std::uint64_t den, int decimals = 2);
double round_half_up(double value, int decimals = 2);

struct LevelMetrics {
    ConfusionCounts counts;
    ConfusionCounts counts_all_paragraphs;
};

struct MetricsReport {
    std::map<Level, LevelMetrics> levels;
    std::map<Group, GroupAccuracy> groups;
    TypeAccuracy type;
    std::vector<std::string> excluded;
    std::string method;
};

/// Evaluates all three levels in both pair units. Paragraphs listed in
/// `excluded` (no usable prediction) are dropped from the gold side first.
MetricsReport build_report(const Predictions& predictions, const GoldStandard& gold, const ProcessModel& model,
                           const std::map<std::string, Group>* groups = nullptr,
                           const std::vector<std::string>& excluded = {});

json to_json(const MetricsReport& report);

// ---------------------------------------------------------------------------
// Scenario recommender

enum class Usage { low, high, low_to_high };
enum class Intensity { low, high };

struct ScenarioProfile {
    Usage usage = Usage::low_to_high;
    Intensity impact = Intensity::low;
    Intensity dynamics = Intensity::low;
    Intensity regulatory_input = Intensity::low;
};

enum class MethodCombination { expert_only, sota_nlp_lir_plus_expert, gpt_plus_expert, crowd_plus_expert };

std::string_view to_string(MethodCombination combination);
Usage usage_from_string(std::string_view text);
Intensity intensity_from_string(std::string_view text);

struct Recommendation {
    MethodCombination combination;
    bool canonical = true;  // false when no scenario row matched exactly
    int row = 0;            // 1-based row of the scenario table that was chosen
};

/// Looks the profile up in the four canonical scenarios. A profile that matches
/// none gets the nearest row, comparing impact first, then dynamics, then
/// regulatory input, then usage.
Recommendation recommend_methods(const ScenarioProfile& profile);

}  // namespace regrel
