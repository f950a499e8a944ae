#pragma once

#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

namespace regrel {

using json = nlohmann::json;

enum class RelevanceType { irrelevant, informative, compliance };

/// Process hierarchy level. Level 0 (business relevance) is derived, never stored.
enum class Level { process = 1, subprocess = 2, task = 3 };

std::string_view to_string(RelevanceType type);
RelevanceType relevance_from_string(std::string_view text);

std::string_view to_string(Level level);
Level level_from_string(std::string_view text);
Level level_from_int(int level);

inline bool is_relevant(RelevanceType type) { return type != RelevanceType::irrelevant; }

/// compliance > informative > irrelevant
inline RelevanceType stronger(RelevanceType a, RelevanceType b)
{
    return static_cast<int>(a) >= static_cast<int>(b) ? a : b;
}

/// Relevance of one paragraph for every node of one process model.
/// Absent node entries mean irrelevant.
struct LabelSet {
    RelevanceType level1 = RelevanceType::irrelevant;
    std::map<std::string, RelevanceType> level2;
    std::map<std::string, RelevanceType> level3;

    RelevanceType at(Level level, const std::string& node_id) const;
    bool any_relevant(Level level) const;

    bool operator==(const LabelSet&) const = default;
};

json to_json(const LabelSet& labels);
LabelSet label_set_from_json(const json& j);

}  // namespace regrel
