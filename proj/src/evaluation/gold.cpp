#include <algorithm>

#include "regrel/error.hpp"
#include "regrel/evaluation.hpp"
#include "regrel/json_io.hpp"

namespace regrel {

void validate_gold(const GoldStandard& gold, const ProcessModel& model, const std::map<std::string, Group>* groups)
{
    for (const auto& [para_id, entry] : gold.labels) {
        // normalize_labels validates node ids and levels as a side effect.
        normalize_labels(entry.labels, model);
        auto violations = closure_violations(entry.labels, model);
        if (!violations.empty()) {
            throw ValidationError("gold for paragraph '" + para_id + "' violates propagation closure at node '" +
                                  violations.front() + "'");
        }
        if (groups == nullptr) {
            continue;
        }
        auto it = groups->find(para_id);
        if (it == groups->end()) {
            throw ValidationError("gold paragraph '" + para_id + "' is not in the study set");
        }
        const bool relevant = is_relevant(entry.labels.level1);
        if ((it->second == Group::A) != relevant) {
            throw ValidationError("gold for paragraph '" + para_id + "' is inconsistent with group " +
                                  std::string(to_string(it->second)) + ": level1 is " +
                                  std::string(to_string(entry.labels.level1)));
        }
    }
}

GoldStandard load_gold(std::string use_case_id, const std::vector<json>& records, const ProcessModel& model,
                       const std::map<std::string, Group>* groups)
{
    GoldStandard gold;
    gold.use_case_id = std::move(use_case_id);
    for (const auto& record : records) {
        auto para_id = required_string(record, "para_id", "gold record");
        GoldEntry entry;
        entry.labels = label_set_from_json(record);
        if (auto it = record.find("provenance"); it != record.end()) {
            if (it->is_string()) {
                entry.provenance["level1"] = it->get<std::string>();
            } else if (it->is_object()) {
                for (const auto& [key, note] : it->items()) {
                    entry.provenance[key] = note.is_string() ? note.get<std::string>() : note.dump();
                }
            }
        }
        if (!gold.labels.emplace(para_id, std::move(entry)).second) {
            throw ValidationError("duplicate gold record for paragraph '" + para_id + "'");
        }
    }
    validate_gold(gold, model, groups);
    return gold;
}

std::vector<json> gold_to_jsonl(const GoldStandard& gold)
{
    std::vector<json> out;
    out.reserve(gold.labels.size());
    for (const auto& [para_id, entry] : gold.labels) {
        auto j = to_json(entry.labels);
        j["para_id"] = para_id;
        j["provenance"] = entry.provenance;
        out.push_back(std::move(j));
    }
    return out;
}

std::map<std::string, Group> groups_of(const StudySet& set)
{
    std::map<std::string, Group> out;
    for (const auto& para : set.paragraphs) {
        if (para.group) {
            out.emplace(para.para_id, *para.group);
        }
    }
    return out;
}

json to_json(const PredictionRecord& record)
{
    json j = record.labels ? to_json(*record.labels) : json{{"level1", nullptr}, {"outcome", "no_qualified_data"}};
    j["para_id"] = record.para_id;
    j["method"] = record.method;
    j["config_digest"] = record.config_digest;
    return j;
}

PredictionRecord prediction_from_json(const json& j)
{
    PredictionRecord record;
    record.para_id = required_string(j, "para_id", "prediction record");
    record.method = optional_string(j, "method").value_or("");
    record.config_digest = optional_string(j, "config_digest").value_or("");
    if (j.value("outcome", std::string()) != "no_qualified_data") {
        record.labels = label_set_from_json(j);
    }
    return record;
}

LoadedPredictions load_predictions(const std::vector<json>& records)
{
    LoadedPredictions out;
    for (const auto& j : records) {
        auto record = prediction_from_json(j);
        if (out.method.empty()) {
            out.method = record.method;
        }
        if (out.labels.contains(record.para_id) ||
            std::find(out.excluded.begin(), out.excluded.end(), record.para_id) != out.excluded.end()) {
            throw ValidationError("duplicate prediction for paragraph '" + record.para_id + "'");
        }
        if (record.labels) {
            out.labels.emplace(record.para_id, std::move(*record.labels));
        } else {
            out.excluded.push_back(record.para_id);
        }
    }
    return out;
}

}  // namespace regrel
