#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "regrel/relevance.hpp"

namespace regrel {

struct BusinessContext {
    std::string business_id;
    std::string location;
    std::string domain;
    std::string size;

    bool operator==(const BusinessContext&) const = default;
};

enum class NodeKind { process, subprocess, task, throwing_event };

std::string_view to_string(NodeKind kind);
NodeKind node_kind_from_string(std::string_view text);

struct ProcessNode {
    std::string node_id;
    Level level = Level::process;
    std::string name;
    std::string description;
    std::optional<std::string> parent_id;
    NodeKind kind = NodeKind::process;

    bool operator==(const ProcessNode&) const = default;
};

/// A business context plus a process tree of depth three: one process,
/// its sub-processes, and their tasks and throwing events.
class ProcessModel {
  public:
    std::string model_id;
    BusinessContext context;
    std::vector<ProcessNode> nodes;
    std::optional<std::string> bpmn_xml;
    /// False for skeletons extracted from BPMN: descriptions still missing,
    /// and tasks may hang directly off the process.
    bool complete = true;

    const ProcessNode* find(std::string_view node_id) const;
    const ProcessNode& at(std::string_view node_id) const;  // throws NotFoundError
    const ProcessNode& root() const;
    std::vector<const ProcessNode*> at_level(Level level) const;
    std::vector<const ProcessNode*> children(std::string_view node_id) const;
    /// Ancestors ordered from the root down, excluding the node itself.
    std::vector<const ProcessNode*> ancestors(std::string_view node_id) const;
    std::size_t count(Level level) const;
    /// Node ids whose description is empty.
    std::vector<std::string> missing_descriptions() const;

    bool operator==(const ProcessModel&) const = default;
};

/// Parses `process.json` and enforces every tree invariant. Errors name the
/// offending node ("duplicate id", "orphan node", "depth violation"). Models
/// flagged `"complete": false` may leave descriptions and business context
/// empty, and may attach tasks directly to the process.
ProcessModel load_process(const json& source);

/// Checks the invariants of an in-memory model (as load_process does).
void validate_process(const ProcessModel& model);

json to_json(const ProcessModel& model);

/// Extracts node names, kinds and containment from BPMN 2.0 XML. The result is
/// marked incomplete and carries empty descriptions. Gateways, flows and
/// catching events are ignored; nested sub-processes fold into their top-level
/// sub-process. Throws ParseError on malformed XML or when no process exists.
ProcessModel extract_bpmn_skeleton(std::string_view bpmn_xml);

enum class QueryVerbosity { description_only, with_ancestors };

QueryVerbosity query_verbosity_from_string(std::string_view text);
std::string_view to_string(QueryVerbosity verbosity);

/// Query text for a node: its description, optionally preceded by its
/// ancestors' descriptions (root first) separated by blank lines.
std::string node_query_text(const ProcessModel& model, std::string_view node_id,
                            QueryVerbosity verbosity = QueryVerbosity::description_only);

}  // namespace regrel
