#include <algorithm>

#include <spdlog/spdlog.h>

#include "regrel/crowd.hpp"
#include "regrel/error.hpp"
#include "regrel/json_io.hpp"

namespace regrel {

std::string_view to_string(CrowdPhase phase)
{
    return phase == CrowdPhase::phase1 ? "phase1" : "phase2";
}

CrowdPhase crowd_phase_from_string(std::string_view text)
{
    if (text == "phase1" || text == "1") {
        return CrowdPhase::phase1;
    }
    if (text == "phase2" || text == "2") {
        return CrowdPhase::phase2;
    }
    throw ValidationError("unknown crowd phase '" + std::string(text) + "'");
}

std::string_view to_string(AggregationStrategy strategy)
{
    switch (strategy) {
    case AggregationStrategy::unfiltered:
        return "unfiltered";
    case AggregationStrategy::qlt_filter:
        return "qlt_filter";
    case AggregationStrategy::qlt_comb:
        return "qlt_comb";
    }
    return "unfiltered";
}

AggregationStrategy aggregation_strategy_from_string(std::string_view text)
{
    if (text == "unfiltered") {
        return AggregationStrategy::unfiltered;
    }
    if (text == "qlt_filter") {
        return AggregationStrategy::qlt_filter;
    }
    if (text == "qlt_comb") {
        return AggregationStrategy::qlt_comb;
    }
    throw ValidationError("unknown aggregation strategy '" + std::string(text) +
                          "' (expected unfiltered, qlt_filter or qlt_comb)");
}

json to_json(const WorkerSubmission& s)
{
    json j{{"worker_id", s.worker_id},
           {"para_id", s.para_id},
           {"phase", to_string(s.phase)},
           {"justification", s.justification},
           {"test_answers", {s.test_answers.first, s.test_answers.second}},
           {"clicked_forbidden_option", s.clicked_forbidden_option},
           {"selected_options", s.selected_options},
           {"received_at", s.received_at}};
    if (s.phase1) {
        j["phase1"] = {{"process_relevant", s.phase1->process_relevant},
                       {"subprocess_ids", s.phase1->subprocess_ids}};
    }
    if (s.phase2) {
        json nodes = json::object();
        for (const auto& [node_id, type] : s.phase2->nodes) {
            nodes[node_id] = to_string(type);
        }
        j["phase2"] = {{"nodes", nodes}};
    }
    return j;
}

WorkerSubmission submission_from_json(const json& j)
{
    WorkerSubmission s;
    try {
        s.worker_id = required_string(j, "worker_id", "submission");
        s.para_id = required_string(j, "para_id", "submission");
        s.phase = crowd_phase_from_string(required_string(j, "phase", "submission"));
        s.justification = j.value("justification", std::string());
        s.clicked_forbidden_option = j.value("clicked_forbidden_option", false);
        s.selected_options = j.value("selected_options", std::set<std::string>{});
        s.received_at = j.value("received_at", std::string());
        if (auto it = j.find("test_answers"); it != j.end()) {
            if (!it->is_array() || it->size() != 2) {
                throw ValidationError("submission test_answers must hold two booleans");
            }
            s.test_answers = {(*it)[0].get<bool>(), (*it)[1].get<bool>()};
        }
        if (auto it = j.find("phase1"); it != j.end() && !it->is_null()) {
            Phase1Answer answer;
            answer.process_relevant = it->at("process_relevant").get<bool>();
            answer.subprocess_ids = it->value("subprocess_ids", std::set<std::string>{});
            s.phase1 = std::move(answer);
        }
        if (auto it = j.find("phase2"); it != j.end() && !it->is_null()) {
            Phase2Answer answer;
            for (const auto& [node_id, type] : it->at("nodes").items()) {
                answer.nodes[node_id] = relevance_from_string(type.get<std::string>());
            }
            s.phase2 = std::move(answer);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed submission: ") + e.what());
    }

    const bool phase1 = s.phase == CrowdPhase::phase1;
    if (phase1 != s.phase1.has_value() || phase1 == s.phase2.has_value()) {
        throw ValidationError("submission of worker '" + s.worker_id + "' for '" + s.para_id +
                              "' must carry exactly the answer of its phase");
    }
    return s;
}

std::vector<WorkerSubmission> load_submissions(const std::vector<json>& records)
{
    std::vector<WorkerSubmission> out;
    out.reserve(records.size());
    for (const auto& record : records) {
        out.push_back(submission_from_json(record));
    }
    return out;
}

QualityFlags check_quality(const WorkerSubmission& submission, const QualityRules& rules)
{
    QualityFlags flags;
    flags.passed_test_questions = submission.test_answers.first && submission.test_answers.second;
    flags.passed_attention = !submission.clicked_forbidden_option;

    const auto& options = submission.selected_options;
    bool consistent = !(options.contains(rules.not_relevant_option) && options.size() > 1);
    for (const auto& [a, b] : rules.illegal_pairs) {
        if (options.contains(a) && options.contains(b)) {
            consistent = false;
        }
    }
    flags.passed_semantic_dependency = consistent;
    return flags;
}

namespace {

bool vote_passes(std::size_t votes, std::size_t voters, const AggregateOptions& options)
{
    if (votes == 0 || voters == 0) {
        return false;
    }
    if (options.vote_rule == VoteRule::majority) {
        return 2 * votes >= voters;
    }
    return static_cast<double>(votes) / static_cast<double>(voters) >= options.proportion_threshold;
}

bool earlier(const WorkerSubmission* a, const WorkerSubmission* b)
{
    if (a->received_at != b->received_at) {
        return a->received_at < b->received_at;
    }
    return a->worker_id < b->worker_id;
}

/// Copy of the submission without node ids the model does not know at the expected level.
WorkerSubmission sanitized(const WorkerSubmission& s, const ProcessModel& model, std::vector<std::string>& warnings)
{
    WorkerSubmission out = s;
    auto keep = [&](const std::string& node_id, Level level) {
        const auto* node = model.find(node_id);
        if (node != nullptr && node->level == level) {
            return true;
        }
        warnings.push_back("worker '" + s.worker_id + "' referenced unknown " + std::string(to_string(level)) +
                           " node '" + node_id + "'; dropped");
        return false;
    };
    if (out.phase1) {
        std::erase_if(out.phase1->subprocess_ids, [&](const std::string& id) { return !keep(id, Level::subprocess); });
    }
    if (out.phase2) {
        std::erase_if(out.phase2->nodes, [&](const auto& entry) { return !keep(entry.first, Level::task); });
    }
    return out;
}

std::size_t distinct_workers(const std::vector<const WorkerSubmission*>& pool)
{
    std::set<std::string> workers;
    for (const auto* s : pool) {
        workers.insert(s->worker_id);
    }
    return workers.size();
}

void aggregate_phase1(const std::vector<const WorkerSubmission*>& pool, AggregationStrategy strategy,
                      const AggregateOptions& options, LabelSet& labels)
{
    if (strategy == AggregationStrategy::qlt_filter) {
        const auto* first = *std::min_element(pool.begin(), pool.end(), earlier);
        if (first->phase1->process_relevant) {
            labels.level1 = RelevanceType::informative;
        }
        for (const auto& id : first->phase1->subprocess_ids) {
            labels.level2[id] = RelevanceType::informative;
        }
        return;
    }

    std::size_t process_votes = 0;
    std::map<std::string, std::size_t> subprocess_votes;
    for (const auto* s : pool) {
        process_votes += s->phase1->process_relevant ? 1 : 0;
        for (const auto& id : s->phase1->subprocess_ids) {
            ++subprocess_votes[id];
        }
    }
    const bool union_rule = strategy == AggregationStrategy::qlt_comb;
    if (union_rule ? process_votes > 0 : vote_passes(process_votes, pool.size(), options)) {
        labels.level1 = RelevanceType::informative;
    }
    for (const auto& [id, votes] : subprocess_votes) {
        if (union_rule || vote_passes(votes, pool.size(), options)) {
            labels.level2[id] = RelevanceType::informative;
        }
    }
}

void aggregate_phase2(const std::vector<const WorkerSubmission*>& pool, AggregationStrategy strategy,
                      const AggregateOptions& options, LabelSet& labels)
{
    if (strategy == AggregationStrategy::qlt_filter) {
        const auto* first = *std::min_element(pool.begin(), pool.end(), earlier);
        for (const auto& [id, type] : first->phase2->nodes) {
            if (is_relevant(type)) {
                labels.level3[id] = type;
            }
        }
        return;
    }

    struct Tally {
        std::size_t informative = 0;
        std::size_t compliance = 0;
    };
    std::map<std::string, Tally> tallies;
    for (const auto* s : pool) {
        for (const auto& [id, type] : s->phase2->nodes) {
            if (type == RelevanceType::informative) {
                ++tallies[id].informative;
            } else if (type == RelevanceType::compliance) {
                ++tallies[id].compliance;
            }
        }
    }
    const bool union_rule = strategy == AggregationStrategy::qlt_comb;
    for (const auto& [id, tally] : tallies) {
        const auto votes = tally.informative + tally.compliance;
        if (!union_rule && !vote_passes(votes, pool.size(), options)) {
            continue;
        }
        // Conflicts resolve to compliance: under the union any compliance vote
        // wins, under voting a tie does.
        const bool compliance = union_rule ? tally.compliance > 0 : tally.compliance >= tally.informative;
        labels.level3[id] = compliance ? RelevanceType::compliance : RelevanceType::informative;
    }
}

}  // namespace

CrowdAggregate aggregate(std::span<const WorkerSubmission> submissions, AggregationStrategy strategy,
                         const ProcessModel& model, const AggregateOptions& options)
{
    if (submissions.empty()) {
        throw ValidationError("cannot aggregate zero submissions");
    }
    CrowdAggregate out;
    out.para_id = submissions.front().para_id;

    std::vector<WorkerSubmission> clean;
    clean.reserve(submissions.size());
    for (const auto& s : submissions) {
        if (s.para_id != out.para_id) {
            throw ValidationError("submissions for '" + out.para_id + "' and '" + s.para_id +
                                  "' cannot be aggregated together");
        }
        clean.push_back(sanitized(s, model, out.warnings));
    }

    const bool filtered = strategy != AggregationStrategy::unfiltered;
    std::vector<const WorkerSubmission*> pool1;
    std::vector<const WorkerSubmission*> pool2;
    std::size_t phase1_total = 0;
    std::size_t phase2_total = 0;
    for (const auto& s : clean) {
        const bool usable = !filtered || check_quality(s, options.quality).passed_all();
        if (s.phase == CrowdPhase::phase1) {
            ++phase1_total;
            if (usable) {
                pool1.push_back(&s);
            }
        } else {
            ++phase2_total;
            if (usable) {
                pool2.push_back(&s);
            }
        }
    }

    if (phase1_total == 0) {
        throw ValidationError("paragraph '" + out.para_id + "' has no phase-1 submissions");
    }
    if (pool1.empty()) {
        out.warnings.push_back("no phase-1 submission passed the quality checks");
        return out;
    }
    if (distinct_workers(pool1) < options.target_workers) {
        out.warnings.push_back("only " + std::to_string(distinct_workers(pool1)) + " usable phase-1 workers (target " +
                               std::to_string(options.target_workers) + ")");
    }

    LabelSet labels;
    aggregate_phase1(pool1, strategy, options, labels);
    labels = normalize_labels(labels, model);

    if (!is_relevant(labels.level1)) {
        if (phase2_total > 0) {
            out.warnings.push_back("phase-2 submissions ignored: phase-1 aggregate is irrelevant");
        }
    } else if (!pool2.empty()) {
        aggregate_phase2(pool2, strategy, options, labels);
        labels = normalize_labels(labels, model);
    } else if (phase2_total > 0) {
        out.warnings.push_back("no phase-2 submission passed the quality checks");
    }

    out.labels = std::move(labels);
    return out;
}

std::vector<CrowdAggregate> aggregate_all(const std::vector<WorkerSubmission>& submissions,
                                          AggregationStrategy strategy, const ProcessModel& model,
                                          const AggregateOptions& options)
{
    std::map<std::string, std::vector<WorkerSubmission>> by_para;
    for (const auto& s : submissions) {
        by_para[s.para_id].push_back(s);
    }
    std::vector<CrowdAggregate> out;
    out.reserve(by_para.size());
    for (const auto& [para_id, group] : by_para) {
        out.push_back(aggregate(group, strategy, model, options));
        for (const auto& warning : out.back().warnings) {
            spdlog::debug("{}: {}", para_id, warning);
        }
    }
    return out;
}

PredictionRecord to_prediction(const CrowdAggregate& aggregate, AggregationStrategy strategy)
{
    return {aggregate.para_id, aggregate.labels, "crowd_" + std::string(to_string(strategy)), ""};
}

}  // namespace regrel
