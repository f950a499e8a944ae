#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "regrel/corpus.hpp"
#include "regrel/evaluation.hpp"
#include "regrel/llm.hpp"
#include "regrel/process.hpp"
#include "regrel/retrieval.hpp"

namespace regrel {

enum class ReviewStatus { pending, confirmed, rejected, retyped };

std::string_view to_string(ReviewStatus status);
ReviewStatus review_status_from_string(std::string_view text);

struct ReviewItem {
    std::string item_id;
    std::string run_id;
    std::string model_id;
    std::string para_id;
    std::string query_node_id;
    Level level = Level::process;
    std::string method;
    std::optional<double> machine_score;
    std::optional<RelevanceType> machine_label;
    std::optional<std::string> machine_justification;
    ReviewStatus status = ReviewStatus::pending;
    std::optional<RelevanceType> expert_label;
    std::optional<std::string> decided_at;
    std::optional<std::string> reviewer;

    bool operator==(const ReviewItem&) const = default;
};

json to_json(const ReviewItem& item);
ReviewItem review_item_from_json(const json& j);

enum class RunKind { rank, judge };
enum class RunStatus { running, done, failed };

std::string_view to_string(RunKind kind);
std::string_view to_string(RunStatus status);

struct RunRecord {
    std::string run_id;
    RunKind kind = RunKind::rank;
    RunStatus status = RunStatus::running;
    std::string set_id;
    std::string model_id;
    json config = json::object();
    std::string started_at;
    std::optional<std::string> finished_at;
    std::optional<std::string> error;
    std::vector<Ranking> rankings;       // rank runs, reranked stage
    std::vector<LlmJudgment> judgments;  // judge runs
    std::vector<std::string> warnings;

    bool operator==(const RunRecord&) const = default;
};

json to_json(const RunRecord& run);
RunRecord run_record_from_json(const json& j);

/// Everything the store knows at one version. Treated as immutable once published.
struct StoreState {
    std::uint64_t version = 0;  // sequence number of the last applied log record
    std::uint64_t next_item = 1;
    std::uint64_t next_run = 1;
    std::map<std::string, StudySet> sets;
    std::map<std::string, ProcessModel> processes;
    std::map<std::string, RegulatoryDocument> documents;
    std::map<std::string, RunRecord> runs;
    std::map<std::string, ReviewItem> items;
    std::map<std::string, GoldStandard> gold;  // keyed by process model id
    std::vector<json> audit;
    std::set<std::string> manual_review;  // "<model>|<para>|<node>" ancestors to re-check by hand
    std::map<std::string, json> idempotency;  // key -> original decision result
};

json to_json(const StoreState& state);

struct ReviewPolicy {
    /// Rankings: the best `top_k` entries per query node.
    std::size_t top_k = 10;
    /// Judgments: only (paragraph, node) pairs the judge marked relevant.
    bool relevant_only = true;
};

enum class DecisionAction { confirm, reject, retype };

DecisionAction decision_action_from_string(std::string_view text);

struct Decision {
    DecisionAction action = DecisionAction::confirm;
    std::optional<RelevanceType> type;
    std::string reviewer;
    std::optional<std::string> idempotency_key;
};

/// Durable, single-writer store. Every command becomes one record in an
/// append-only log (fsync'd before it is applied). Snapshots capture the state
/// at a version; opening the store loads the newest snapshot and replays the
/// later log records. A torn final log line is truncated away.
class Store {
  public:
    using Clock = std::function<std::string()>;

    explicit Store(std::filesystem::path dir, Clock clock = {});

    std::shared_ptr<const StoreState> state() const;
    const std::filesystem::path& directory() const { return m_dir; }

    void put_study_set(const StudySet& set);
    void put_process(const ProcessModel& model);
    void put_documents(const std::vector<RegulatoryDocument>& documents);

    /// Throws NotFoundError for an unknown set or model.
    std::string start_run(RunKind kind, const std::string& set_id, const std::string& model_id, const json& config);
    void finish_run(const std::string& run_id, std::vector<Ranking> rankings, std::vector<LlmJudgment> judgments,
                    std::vector<std::string> warnings);
    void fail_run(const std::string& run_id, const std::string& error);

    /// Creates pending items for the run's pre-selection; pairs already queued
    /// for the same run are skipped. Returns the new items only.
    std::vector<ReviewItem> enqueue_review(const std::string& run_id, const ReviewPolicy& policy);

    /// Records an expert decision and updates the gold standard of the item's
    /// model. Replaying an idempotency key returns the first result. Deciding a
    /// decided item throws ConflictError carrying the item.
    json decide(const std::string& item_id, const Decision& decision);

    /// Replaces gold entries of the listed paragraphs. Labels without a
    /// provenance note are attributed to this import.
    void import_gold(const std::string& model_id, const std::vector<json>& records);
    GoldStandard export_gold(const std::string& model_id) const;

    /// Writes a snapshot of the current version. Returns its directory.
    std::filesystem::path checkpoint();

    std::size_t log_records() const;

  private:
    json commit(json record);
    void append_to_log(const json& record);
    void load();

    std::filesystem::path m_dir;
    Clock m_clock;
    mutable std::mutex m_state_mutex;
    std::shared_ptr<const StoreState> m_state;
    std::mutex m_writer;
    std::size_t m_log_records = 0;
};

/// Applies one log record to a state, used for live commits and replay alike.
/// Returns the command result (the decision outcome for decisions, else null).
json apply_record(StoreState& state, const json& record);

/// Loads a snapshot directory written by Store::checkpoint.
StoreState read_snapshot(const std::filesystem::path& dir);

std::string utc_timestamp();

/// Predictions of a finished run against the stored gold of its model.
/// Throws ValidationError when gold does not cover the run's study set.
json run_report(const StoreState& state, const std::string& run_id);

}  // namespace regrel
