#include <algorithm>
#include <map>
#include <set>

#include "regrel/error.hpp"
#include "regrel/json_io.hpp"
#include "regrel/process.hpp"

namespace regrel {

std::string_view to_string(NodeKind kind)
{
    switch (kind) {
    case NodeKind::process: return "process";
    case NodeKind::subprocess: return "subprocess";
    case NodeKind::task: return "task";
    case NodeKind::throwing_event: return "throwing_event";
    }
    return "process";
}

NodeKind node_kind_from_string(std::string_view text)
{
    if (text == "process") return NodeKind::process;
    if (text == "subprocess") return NodeKind::subprocess;
    if (text == "task") return NodeKind::task;
    if (text == "throwing_event") return NodeKind::throwing_event;
    throw ValidationError("unknown node kind '" + std::string(text) + "'");
}

QueryVerbosity query_verbosity_from_string(std::string_view text)
{
    if (text == "description_only") return QueryVerbosity::description_only;
    if (text == "with_ancestors") return QueryVerbosity::with_ancestors;
    throw ValidationError("unknown query verbosity '" + std::string(text) + "'");
}

std::string_view to_string(QueryVerbosity verbosity)
{
    return verbosity == QueryVerbosity::description_only ? "description_only" : "with_ancestors";
}

const ProcessNode* ProcessModel::find(std::string_view node_id) const
{
    auto it = std::find_if(nodes.begin(), nodes.end(),
                           [&](const ProcessNode& n) { return n.node_id == node_id; });
    return it == nodes.end() ? nullptr : &*it;
}

const ProcessNode& ProcessModel::at(std::string_view node_id) const
{
    if (const auto* node = find(node_id)) {
        return *node;
    }
    throw NotFoundError("unknown node '" + std::string(node_id) + "' in process model '" + model_id + "'");
}

const ProcessNode& ProcessModel::root() const
{
    for (const auto& node : nodes) {
        if (node.level == Level::process) {
            return node;
        }
    }
    throw ValidationError("process model '" + model_id + "' has no process node");
}

std::vector<const ProcessNode*> ProcessModel::at_level(Level level) const
{
    std::vector<const ProcessNode*> out;
    for (const auto& node : nodes) {
        if (node.level == level) {
            out.push_back(&node);
        }
    }
    return out;
}

std::vector<const ProcessNode*> ProcessModel::children(std::string_view node_id) const
{
    std::vector<const ProcessNode*> out;
    for (const auto& node : nodes) {
        if (node.parent_id && *node.parent_id == node_id) {
            out.push_back(&node);
        }
    }
    return out;
}

std::vector<const ProcessNode*> ProcessModel::ancestors(std::string_view node_id) const
{
    std::vector<const ProcessNode*> chain;
    const ProcessNode* current = &at(node_id);
    while (current->parent_id) {
        current = &at(*current->parent_id);
        chain.push_back(current);
        if (chain.size() > nodes.size()) {
            throw ValidationError("cycle through node '" + std::string(node_id) + "'");
        }
    }
    std::reverse(chain.begin(), chain.end());
    return chain;
}

std::size_t ProcessModel::count(Level level) const
{
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [&](const ProcessNode& n) { return n.level == level; }));
}

std::vector<std::string> ProcessModel::missing_descriptions() const
{
    std::vector<std::string> out;
    for (const auto& node : nodes) {
        if (node.description.find_first_not_of(" \t\r\n") == std::string::npos) {
            out.push_back(node.node_id);
        }
    }
    return out;
}

void validate_process(const ProcessModel& model)
{
    const auto& ctx = model.context;
    if (model.complete && (ctx.location.empty() || ctx.domain.empty() || ctx.size.empty())) {
        throw ValidationError("business context requires non-empty location, domain and size");
    }

    std::map<std::string, const ProcessNode*> by_id;
    for (const auto& node : model.nodes) {
        if (node.node_id.empty()) {
            throw ValidationError("node with empty node_id");
        }
        if (!by_id.emplace(node.node_id, &node).second) {
            throw ValidationError("duplicate id '" + node.node_id + "'");
        }
    }

    std::size_t roots = 0;
    for (const auto& node : model.nodes) {
        const bool kind_ok = (node.level == Level::process && node.kind == NodeKind::process) ||
                             (node.level == Level::subprocess && node.kind == NodeKind::subprocess) ||
                             (node.level == Level::task &&
                              (node.kind == NodeKind::task || node.kind == NodeKind::throwing_event));
        if (!kind_ok) {
            throw ValidationError("kind '" + std::string(to_string(node.kind)) + "' does not match level of node '" +
                                  node.node_id + "'");
        }
        if (node.level == Level::process) {
            ++roots;
            if (node.parent_id) {
                throw ValidationError("depth violation: process node '" + node.node_id + "' has a parent");
            }
            continue;
        }
        if (!node.parent_id) {
            throw ValidationError("orphan node '" + node.node_id + "': missing parent_id");
        }
        auto parent = by_id.find(*node.parent_id);
        if (parent == by_id.end()) {
            throw ValidationError("orphan node '" + node.node_id + "': parent '" + *node.parent_id +
                                  "' does not exist");
        }
        const auto expected_parent = static_cast<Level>(static_cast<int>(node.level) - 1);
        const bool skeleton_task = !model.complete && node.level == Level::task &&
                                   parent->second->level == Level::process;
        if (parent->second->level != expected_parent && !skeleton_task) {
            throw ValidationError("depth violation at node '" + node.node_id + "': parent '" +
                                  *node.parent_id + "' is " + std::string(to_string(parent->second->level)));
        }
    }
    if (roots != 1) {
        throw ValidationError("process model '" + model.model_id + "' must have exactly one L1 node, found " +
                              std::to_string(roots));
    }

    if (model.complete) {
        auto missing = model.missing_descriptions();
        if (!missing.empty()) {
            std::string list;
            for (const auto& id : missing) {
                list += (list.empty() ? "" : ", ") + id;
            }
            throw ValidationError("empty description on node(s): " + list);
        }
    }
}

ProcessModel load_process(const json& source)
{
    if (!source.is_object()) {
        throw ValidationError("process source must be a JSON object");
    }
    ProcessModel model;
    model.model_id = required_string(source, "model_id", "process");
    const auto& ctx = source.value("context", json::object());
    model.context.business_id = optional_string(ctx, "business_id").value_or(model.model_id);
    model.context.location = optional_string(ctx, "location").value_or("");
    model.context.domain = optional_string(ctx, "domain").value_or("");
    model.context.size = optional_string(ctx, "size").value_or("");
    model.bpmn_xml = optional_string(source, "bpmn_xml");
    // Skeletons written by from-bpmn say so explicitly; everything else must be complete.
    const auto complete = source.find("complete");
    model.complete = complete == source.end() || !complete->is_boolean() || complete->get<bool>();

    for (const auto& n : source.value("nodes", json::array())) {
        ProcessNode node;
        node.node_id = required_string(n, "node_id", "process node");
        const auto context = "process node " + node.node_id;
        if (!n.contains("level")) {
            throw ValidationError(context + " has no level");
        }
        const auto& level = n.at("level");
        if (!level.is_number_integer() && !level.is_string()) {
            throw ValidationError(context + " has a malformed level");
        }
        node.level = level.is_number_integer() ? level_from_int(level.get<int>())
                                               : level_from_string(level.get<std::string>());
        node.name = optional_string(n, "name").value_or("");
        node.description = optional_string(n, "description").value_or("");
        node.parent_id = optional_string(n, "parent_id");
        node.kind = node_kind_from_string(required_string(n, "kind", context));
        model.nodes.push_back(std::move(node));
    }
    validate_process(model);
    return model;
}

json to_json(const ProcessModel& model)
{
    json nodes = json::array();
    for (const auto& node : model.nodes) {
        nodes.push_back({{"node_id", node.node_id},
                         {"level", to_string(node.level)},
                         {"name", node.name},
                         {"description", node.description},
                         {"parent_id", node.parent_id ? json(*node.parent_id) : json(nullptr)},
                         {"kind", to_string(node.kind)}});
    }
    json out{{"model_id", model.model_id},
             {"context",
              {{"business_id", model.context.business_id},
               {"location", model.context.location},
               {"domain", model.context.domain},
               {"size", model.context.size}}},
             {"nodes", nodes}};
    if (model.bpmn_xml) {
        out["bpmn_xml"] = *model.bpmn_xml;
    }
    if (!model.complete) {
        out["complete"] = false;
    }
    return out;
}

std::string node_query_text(const ProcessModel& model, std::string_view node_id, QueryVerbosity verbosity)
{
    const auto& node = model.at(node_id);
    if (verbosity == QueryVerbosity::description_only) {
        return node.description;
    }
    std::string text;
    for (const auto* ancestor : model.ancestors(node_id)) {
        text += ancestor->description;
        text += "\n\n";
    }
    text += node.description;
    return text;
}

}  // namespace regrel
