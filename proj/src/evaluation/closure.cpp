#include "regrel/error.hpp"
#include "regrel/evaluation.hpp"

namespace regrel {

namespace {

void check_level(const std::map<std::string, RelevanceType>& labels, Level level, const ProcessModel& model)
{
    for (const auto& [node_id, type] : labels) {
        const auto& node = model.at(node_id);
        if (node.level != level) {
            throw ValidationError("node '" + node_id + "' is " + std::string(to_string(node.level)) +
                                  " but was labeled as " + std::string(to_string(level)));
        }
    }
}

}  // namespace

LabelSet normalize_labels(const LabelSet& labels, const ProcessModel& model)
{
    check_level(labels.level2, Level::subprocess, model);
    check_level(labels.level3, Level::task, model);

    LabelSet out = labels;
    for (const auto& [node_id, type] : labels.level3) {
        if (!is_relevant(type)) {
            continue;
        }
        const auto& parent = *model.at(node_id).parent_id;
        const auto& parent_node = model.at(parent);
        if (parent_node.level == Level::process) {
            // Skeleton models can hang tasks off the process directly.
            out.level1 = is_relevant(out.level1) ? out.level1 : stronger(out.level1, type);
            continue;
        }
        auto& current = out.level2[parent];
        if (!is_relevant(labels.at(Level::subprocess, parent))) {
            current = stronger(current, type);
        }
    }

    if (!is_relevant(labels.level1)) {
        for (const auto& [node_id, type] : out.level2) {
            out.level1 = stronger(out.level1, type);
        }
    }

    // Lifting never introduces explicit irrelevant entries for untouched parents.
    for (auto it = out.level2.begin(); it != out.level2.end();) {
        if (!is_relevant(it->second) && !labels.level2.contains(it->first)) {
            it = out.level2.erase(it);
        } else {
            ++it;
        }
    }
    return out;
}

Predictions normalize_predictions(const Predictions& predictions, const ProcessModel& model)
{
    Predictions out;
    for (const auto& [para_id, labels] : predictions) {
        out.emplace(para_id, normalize_labels(labels, model));
    }
    return out;
}

std::vector<std::string> closure_violations(const LabelSet& labels, const ProcessModel& model)
{
    std::vector<std::string> out;
    for (const auto& [node_id, type] : labels.level3) {
        if (!is_relevant(type)) {
            continue;
        }
        const auto& parent = model.at(*model.at(node_id).parent_id);
        const bool parent_relevant = parent.level == Level::process
                                         ? is_relevant(labels.level1)
                                         : is_relevant(labels.at(Level::subprocess, parent.node_id));
        if (!parent_relevant) {
            out.push_back(node_id);
        }
    }
    if (!is_relevant(labels.level1)) {
        for (const auto& [node_id, type] : labels.level2) {
            if (is_relevant(type)) {
                out.push_back(node_id);
            }
        }
    }
    return out;
}

}  // namespace regrel
