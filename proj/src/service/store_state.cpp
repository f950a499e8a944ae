// Serialization of the store state and the deterministic application of log records.

#include <algorithm>

#include "regrel/error.hpp"
#include "regrel/json_io.hpp"
#include "regrel/store.hpp"

namespace regrel {

std::string_view to_string(ReviewStatus status)
{
    switch (status) {
    case ReviewStatus::pending:
        return "pending";
    case ReviewStatus::confirmed:
        return "confirmed";
    case ReviewStatus::rejected:
        return "rejected";
    case ReviewStatus::retyped:
        return "retyped";
    }
    return "pending";
}

ReviewStatus review_status_from_string(std::string_view text)
{
    for (auto status : {ReviewStatus::pending, ReviewStatus::confirmed, ReviewStatus::rejected,
                        ReviewStatus::retyped}) {
        if (to_string(status) == text) {
            return status;
        }
    }
    throw ValidationError("unknown review status '" + std::string(text) + "'");
}

std::string_view to_string(RunKind kind)
{
    return kind == RunKind::rank ? "rank" : "judge";
}

std::string_view to_string(RunStatus status)
{
    switch (status) {
    case RunStatus::running:
        return "running";
    case RunStatus::done:
        return "done";
    case RunStatus::failed:
        return "failed";
    }
    return "running";
}

namespace {

RunKind run_kind_from_string(std::string_view text)
{
    if (text == "rank") {
        return RunKind::rank;
    }
    if (text == "judge") {
        return RunKind::judge;
    }
    throw ValidationError("unknown run kind '" + std::string(text) + "'");
}

RunStatus run_status_from_string(std::string_view text)
{
    for (auto status : {RunStatus::running, RunStatus::done, RunStatus::failed}) {
        if (to_string(status) == text) {
            return status;
        }
    }
    throw ValidationError("unknown run status '" + std::string(text) + "'");
}

template <typename T>
json optional_json(const std::optional<T>& value)
{
    return value ? json(*value) : json(nullptr);
}

json optional_type(const std::optional<RelevanceType>& type)
{
    return type ? json(to_string(*type)) : json(nullptr);
}

std::optional<RelevanceType> type_field(const json& j, const char* key)
{
    auto text = optional_string(j, key);
    return text ? std::optional(relevance_from_string(*text)) : std::nullopt;
}

}  // namespace

json to_json(const ReviewItem& item)
{
    return json{{"item_id", item.item_id},
                {"run_id", item.run_id},
                {"model_id", item.model_id},
                {"para_id", item.para_id},
                {"query_node_id", item.query_node_id},
                {"level", static_cast<int>(item.level)},
                {"method", item.method},
                {"machine_score", optional_json(item.machine_score)},
                {"machine_label", optional_type(item.machine_label)},
                {"machine_justification", optional_json(item.machine_justification)},
                {"status", to_string(item.status)},
                {"expert_label", optional_type(item.expert_label)},
                {"decided_at", optional_json(item.decided_at)},
                {"reviewer", optional_json(item.reviewer)}};
}

ReviewItem review_item_from_json(const json& j)
{
    ReviewItem item;
    item.item_id = j.at("item_id").get<std::string>();
    item.run_id = j.at("run_id").get<std::string>();
    item.model_id = j.at("model_id").get<std::string>();
    item.para_id = j.at("para_id").get<std::string>();
    item.query_node_id = j.at("query_node_id").get<std::string>();
    item.level = level_from_int(j.at("level").get<int>());
    item.method = j.value("method", std::string());
    if (j.contains("machine_score") && !j["machine_score"].is_null()) {
        item.machine_score = j["machine_score"].get<double>();
    }
    item.machine_label = type_field(j, "machine_label");
    item.machine_justification = optional_string(j, "machine_justification");
    item.status = review_status_from_string(j.value("status", std::string("pending")));
    item.expert_label = type_field(j, "expert_label");
    item.decided_at = optional_string(j, "decided_at");
    item.reviewer = optional_string(j, "reviewer");
    return item;
}

json to_json(const RunRecord& run)
{
    json rankings = json::array();
    for (const auto& r : run.rankings) {
        rankings.push_back(to_json(r));
    }
    json judgments = json::array();
    for (const auto& j : run.judgments) {
        judgments.push_back(to_json(j));
    }
    return json{{"run_id", run.run_id},
                {"kind", to_string(run.kind)},
                {"status", to_string(run.status)},
                {"set_id", run.set_id},
                {"model_id", run.model_id},
                {"config", run.config},
                {"started_at", run.started_at},
                {"finished_at", optional_json(run.finished_at)},
                {"error", optional_json(run.error)},
                {"rankings", rankings},
                {"judgments", judgments},
                {"warnings", run.warnings}};
}

RunRecord run_record_from_json(const json& j)
{
    RunRecord run;
    run.run_id = j.at("run_id").get<std::string>();
    run.kind = run_kind_from_string(j.at("kind").get<std::string>());
    run.status = run_status_from_string(j.at("status").get<std::string>());
    run.set_id = j.at("set_id").get<std::string>();
    run.model_id = j.at("model_id").get<std::string>();
    run.config = j.value("config", json::object());
    run.started_at = j.value("started_at", std::string());
    run.finished_at = optional_string(j, "finished_at");
    run.error = optional_string(j, "error");
    for (const auto& r : j.value("rankings", json::array())) {
        run.rankings.push_back(ranking_from_json(r));
    }
    for (const auto& r : j.value("judgments", json::array())) {
        run.judgments.push_back(judgment_from_json(r));
    }
    run.warnings = j.value("warnings", std::vector<std::string>{});
    return run;
}

json to_json(const StoreState& state)
{
    json sets = json::array();
    for (const auto& [id, set] : state.sets) {
        json paragraphs = json::array();
        for (const auto& p : set.paragraphs) {
            paragraphs.push_back(to_json(p, true));
        }
        sets.push_back({{"set_id", id}, {"paragraphs", paragraphs}});
    }
    json processes = json::array();
    for (const auto& [id, model] : state.processes) {
        processes.push_back(to_json(model));
    }
    json documents = json::array();
    for (const auto& [id, doc] : state.documents) {
        documents.push_back(to_json(doc));
    }
    json runs = json::array();
    for (const auto& [id, run] : state.runs) {
        runs.push_back(to_json(run));
    }
    json items = json::array();
    for (const auto& [id, item] : state.items) {
        items.push_back(to_json(item));
    }
    json gold = json::array();
    for (const auto& [model_id, standard] : state.gold) {
        gold.push_back({{"model_id", model_id},
                        {"use_case_id", standard.use_case_id},
                        {"records", gold_to_jsonl(standard)}});
    }
    return json{{"version", state.version},
                {"next_item", state.next_item},
                {"next_run", state.next_run},
                {"sets", sets},
                {"processes", processes},
                {"documents", documents},
                {"runs", runs},
                {"items", items},
                {"gold", gold},
                {"audit", state.audit},
                {"manual_review", state.manual_review},
                {"idempotency", state.idempotency}};
}

namespace {

std::string node_key(const ProcessNode& node)
{
    return node.level == Level::process ? "level1" : node.node_id;
}

void set_label(LabelSet& labels, const ProcessNode& node, RelevanceType type)
{
    switch (node.level) {
    case Level::process:
        labels.level1 = type;
        break;
    case Level::subprocess:
        labels.level2[node.node_id] = type;
        break;
    case Level::task:
        labels.level3[node.node_id] = type;
        break;
    }
}

bool has_relevant_descendant(const LabelSet& labels, const ProcessModel& model, const ProcessNode& node)
{
    for (const auto* child : model.children(node.node_id)) {
        if (is_relevant(labels.at(child->level, child->node_id)) || has_relevant_descendant(labels, model, *child)) {
            return true;
        }
    }
    return false;
}

/// Every label key whose type differs between two label sets.
std::vector<std::string> changed_keys(const LabelSet& before, const LabelSet& after, const ProcessModel& model)
{
    std::vector<std::string> keys;
    for (const auto& node : model.nodes) {
        if (before.at(node.level, node.node_id) != after.at(node.level, node.node_id)) {
            keys.push_back(node_key(node));
        }
    }
    return keys;
}

json apply_decision(StoreState& state, const json& record)
{
    const auto seq = record.at("seq").get<std::uint64_t>();
    const auto& data = record.at("data");
    auto& item = state.items.at(data.at("item_id").get<std::string>());
    const auto action = decision_action_from_string(data.at("action").get<std::string>());
    const auto label = relevance_from_string(data.at("label").get<std::string>());

    item.status = action == DecisionAction::confirm  ? ReviewStatus::confirmed
                  : action == DecisionAction::reject ? ReviewStatus::rejected
                                                     : ReviewStatus::retyped;
    item.expert_label = label;
    item.decided_at = record.at("at").get<std::string>();
    item.reviewer = data.value("reviewer", std::string());

    const auto& model = state.processes.at(item.model_id);
    const auto& node = model.at(item.query_node_id);
    auto& gold = state.gold[item.model_id];
    if (gold.use_case_id.empty()) {
        gold.use_case_id = state.runs.count(item.run_id) ? state.runs.at(item.run_id).set_id : item.model_id;
    }
    auto& entry = gold.labels[item.para_id];
    const auto before = entry.labels;
    const auto provenance = "decision:" + std::to_string(seq);

    std::vector<std::string> flagged;
    auto flag = [&](const ProcessNode& n) {
        const auto key = item.model_id + "|" + item.para_id + "|" + n.node_id;
        if (state.manual_review.insert(key).second) {
            flagged.push_back(key);
        }
    };

    LabelSet labels = entry.labels;
    set_label(labels, node, label);
    if (!is_relevant(label)) {
        if (has_relevant_descendant(labels, model, node)) {
            // Relevant descendants keep the node relevant through closure.
            flag(node);
        }
        for (const auto* ancestor : model.ancestors(node.node_id)) {
            if (is_relevant(labels.at(ancestor->level, ancestor->node_id)) &&
                !has_relevant_descendant(labels, model, *ancestor)) {
                flag(*ancestor);
            }
        }
    }
    labels = normalize_labels(labels, model);
    for (const auto& key : changed_keys(before, labels, model)) {
        entry.provenance[key] = provenance;
    }
    entry.provenance[node_key(node)] = provenance;
    entry.labels = labels;

    json result{{"seq", seq},
                {"item", to_json(item)},
                {"gold_delta",
                 {{"model_id", item.model_id},
                  {"para_id", item.para_id},
                  {"before", to_json(before)},
                  {"after", to_json(entry.labels)}}},
                {"flagged_for_manual_review", flagged}};

    state.audit.push_back({{"seq", seq},
                           {"kind", "decision"},
                           {"at", record.at("at")},
                           {"item_id", item.item_id},
                           {"model_id", item.model_id},
                           {"para_id", item.para_id},
                           {"node_id", node.node_id},
                           {"action", data.at("action")},
                           {"label", to_string(label)},
                           {"reviewer", data.value("reviewer", std::string())}});
    if (auto key = optional_string(data, "idempotency_key")) {
        state.idempotency[*key] = result;
    }
    return result;
}

void apply_gold_import(StoreState& state, const json& record)
{
    const auto seq = record.at("seq").get<std::uint64_t>();
    const auto& data = record.at("data");
    const auto model_id = data.at("model_id").get<std::string>();
    const auto& model = state.processes.at(model_id);
    const auto records = data.at("records").get<std::vector<json>>();

    auto imported = load_gold(data.value("use_case_id", model_id), records, model);
    auto& gold = state.gold[model_id];
    if (gold.use_case_id.empty()) {
        gold.use_case_id = imported.use_case_id;
    }
    const auto provenance = "import:" + std::to_string(seq);
    std::vector<std::string> para_ids;
    for (auto& [para_id, entry] : imported.labels) {
        for (const auto& node : model.nodes) {
            if (is_relevant(entry.labels.at(node.level, node.node_id)) && !entry.provenance.contains(node_key(node))) {
                entry.provenance[node_key(node)] = provenance;
            }
        }
        if (!entry.provenance.contains("level1")) {
            entry.provenance["level1"] = provenance;
        }
        gold.labels[para_id] = std::move(entry);
        para_ids.push_back(para_id);
    }
    state.audit.push_back({{"seq", seq},
                           {"kind", "gold_import"},
                           {"at", record.at("at")},
                           {"model_id", model_id},
                           {"para_ids", para_ids}});
}

}  // namespace

json apply_record(StoreState& state, const json& record)
{
    const auto seq = record.at("seq").get<std::uint64_t>();
    if (seq != state.version + 1) {
        throw ValidationError("log record " + std::to_string(seq) + " does not follow version " +
                              std::to_string(state.version));
    }
    const auto type = record.at("type").get<std::string>();
    const auto& data = record.at("data");
    json result;

    if (type == "put_set") {
        const auto set_id = data.at("set_id").get<std::string>();
        state.sets[set_id] = load_study_set(set_id, data.at("paragraphs").get<std::vector<json>>());
    } else if (type == "put_process") {
        auto model = load_process(data);
        state.processes[model.model_id] = std::move(model);
    } else if (type == "put_documents") {
        for (const auto& doc : load_documents(data.at("documents").get<std::vector<json>>())) {
            state.documents[doc.doc_id] = doc;
        }
    } else if (type == "run_started") {
        RunRecord run;
        run.run_id = data.at("run_id").get<std::string>();
        run.kind = run_kind_from_string(data.at("kind").get<std::string>());
        run.set_id = data.at("set_id").get<std::string>();
        run.model_id = data.at("model_id").get<std::string>();
        run.config = data.value("config", json::object());
        run.started_at = record.at("at").get<std::string>();
        state.runs[run.run_id] = std::move(run);
        ++state.next_run;
    } else if (type == "run_finished") {
        auto& run = state.runs.at(data.at("run_id").get<std::string>());
        run.status = run_status_from_string(data.at("status").get<std::string>());
        run.finished_at = record.at("at").get<std::string>();
        run.error = optional_string(data, "error");
        run.rankings.clear();
        for (const auto& r : data.value("rankings", json::array())) {
            run.rankings.push_back(ranking_from_json(r));
        }
        run.judgments.clear();
        for (const auto& j : data.value("judgments", json::array())) {
            run.judgments.push_back(judgment_from_json(j));
        }
        run.warnings = data.value("warnings", std::vector<std::string>{});
    } else if (type == "enqueue") {
        for (const auto& j : data.at("items")) {
            auto item = review_item_from_json(j);
            state.items[item.item_id] = std::move(item);
            ++state.next_item;
        }
    } else if (type == "decision") {
        result = apply_decision(state, record);
    } else if (type == "gold_import") {
        apply_gold_import(state, record);
    } else {
        throw ValidationError("unknown log record type '" + type + "'");
    }
    state.version = seq;
    return result;
}

DecisionAction decision_action_from_string(std::string_view text)
{
    if (text == "confirm") {
        return DecisionAction::confirm;
    }
    if (text == "reject") {
        return DecisionAction::reject;
    }
    if (text == "retype") {
        return DecisionAction::retype;
    }
    throw ValidationError("unknown decision action '" + std::string(text) + "' (expected confirm, reject or retype)");
}

}  // namespace regrel
