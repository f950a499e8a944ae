#include "regrel/relevance.hpp"

#include <algorithm>

#include "regrel/error.hpp"

namespace regrel {

std::string_view to_string(RelevanceType type)
{
    switch (type) {
    case RelevanceType::irrelevant: return "irrelevant";
    case RelevanceType::informative: return "informative";
    case RelevanceType::compliance: return "compliance";
    }
    return "irrelevant";
}

RelevanceType relevance_from_string(std::string_view text)
{
    if (text == "irrelevant") return RelevanceType::irrelevant;
    if (text == "informative") return RelevanceType::informative;
    if (text == "compliance") return RelevanceType::compliance;
    throw ValidationError("unknown relevance type '" + std::string(text) + "'");
}

std::string_view to_string(Level level)
{
    switch (level) {
    case Level::process: return "L1_process";
    case Level::subprocess: return "L2_subprocess";
    case Level::task: return "L3_task_or_event";
    }
    return "L1_process";
}

Level level_from_string(std::string_view text)
{
    if (text == "L1_process" || text == "1") return Level::process;
    if (text == "L2_subprocess" || text == "2") return Level::subprocess;
    if (text == "L3_task_or_event" || text == "3") return Level::task;
    throw ValidationError("unknown process level '" + std::string(text) + "'");
}

Level level_from_int(int level)
{
    if (level < 1 || level > 3) {
        throw ValidationError("process level must be 1, 2 or 3, got " + std::to_string(level));
    }
    return static_cast<Level>(level);
}

RelevanceType LabelSet::at(Level level, const std::string& node_id) const
{
    const std::map<std::string, RelevanceType>* labels = nullptr;
    switch (level) {
    case Level::process: return level1;
    case Level::subprocess: labels = &level2; break;
    case Level::task: labels = &level3; break;
    }
    auto it = labels->find(node_id);
    return it == labels->end() ? RelevanceType::irrelevant : it->second;
}

bool LabelSet::any_relevant(Level level) const
{
    auto relevant = [](const auto& kv) { return is_relevant(kv.second); };
    switch (level) {
    case Level::process: return is_relevant(level1);
    case Level::subprocess: return std::any_of(level2.begin(), level2.end(), relevant);
    case Level::task: return std::any_of(level3.begin(), level3.end(), relevant);
    }
    return false;
}

namespace {

json node_map_to_json(const std::map<std::string, RelevanceType>& labels)
{
    json out = json::object();
    for (const auto& [node, type] : labels) {
        out[node] = to_string(type);
    }
    return out;
}

std::map<std::string, RelevanceType> node_map_from_json(const json& j, std::string_view key)
{
    std::map<std::string, RelevanceType> out;
    if (j.is_null()) {
        return out;
    }
    if (!j.is_object()) {
        throw ValidationError(std::string(key) + " must be an object of node id to relevance type");
    }
    for (const auto& [node, value] : j.items()) {
        if (!value.is_string()) {
            throw ValidationError(std::string(key) + "." + node + " must be a string");
        }
        out[node] = relevance_from_string(value.get<std::string>());
    }
    return out;
}

}  // namespace

json to_json(const LabelSet& labels)
{
    return json{{"level1", to_string(labels.level1)},
                {"level2", node_map_to_json(labels.level2)},
                {"level3", node_map_to_json(labels.level3)}};
}

LabelSet label_set_from_json(const json& j)
{
    if (!j.is_object() || !j.contains("level1") || !j["level1"].is_string()) {
        throw ValidationError("label record requires a string 'level1'");
    }
    LabelSet labels;
    labels.level1 = relevance_from_string(j["level1"].get<std::string>());
    labels.level2 = node_map_from_json(j.value("level2", json()), "level2");
    labels.level3 = node_map_from_json(j.value("level3", json()), "level3");
    return labels;
}

}  // namespace regrel
