#include <memory>
#include <set>
#include <string>
#include <vector>

#include <expat.h>

#include "regrel/error.hpp"
#include "regrel/process.hpp"
#include "regrel/text.hpp"

namespace regrel {

namespace {

constexpr std::string_view kBpmnModelNs = "http://www.omg.org/spec/BPMN/20100524/MODEL";
constexpr char kNsSeparator = '|';

const std::set<std::string, std::less<>> kTaskElements = {
    "task",        "userTask",   "serviceTask",      "sendTask",  "receiveTask",
    "manualTask",  "scriptTask", "businessRuleTask",
};

const std::set<std::string, std::less<>> kSubprocessElements = {
    "subProcess", "callActivity", "adHocSubProcess", "transaction",
};

const std::set<std::string, std::less<>> kThrowEventElements = {
    "intermediateThrowEvent", "endEvent",
};

// Which model node an open XML element contributes to.
struct Frame {
    enum class Role { other, process, subprocess, nested_subprocess, leaf } role = Role::other;
    std::string node_id;  // for process/subprocess frames: the node children attach to
};

struct ParseState {
    XML_Parser parser = nullptr;
    ProcessModel model;
    std::vector<Frame> stack;
    bool seen_bpmn_ns = false;
    bool process_done = false;
    std::size_t synthesized = 0;

    const Frame* container() const
    {
        for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
            if (it->role == Frame::Role::process || it->role == Frame::Role::subprocess ||
                it->role == Frame::Role::nested_subprocess) {
                return &*it;
            }
        }
        return nullptr;
    }

    bool inside_leaf() const
    {
        for (const auto& frame : stack) {
            if (frame.role == Frame::Role::leaf) {
                return true;
            }
        }
        return false;
    }
};

std::pair<std::string_view, std::string_view> split_name(const XML_Char* name)
{
    std::string_view full(name);
    auto pos = full.find(kNsSeparator);
    if (pos == std::string_view::npos) {
        return {{}, full};
    }
    return {full.substr(0, pos), full.substr(pos + 1)};
}

std::string attribute(const XML_Char** attrs, std::string_view wanted)
{
    for (int i = 0; attrs[i] != nullptr; i += 2) {
        auto [ns, local] = split_name(attrs[i]);
        if (ns.empty() && local == wanted) {
            return attrs[i + 1];
        }
    }
    return {};
}

void add_node(ParseState& state, const XML_Char** attrs, Level level, NodeKind kind,
              std::optional<std::string> parent, Frame& frame)
{
    auto id = attribute(attrs, "id");
    if (id.empty() || state.model.find(id) != nullptr) {
        id = "node-" + std::to_string(++state.synthesized);
    }
    auto name = normalize_whitespace(attribute(attrs, "name"));
    state.model.nodes.push_back(ProcessNode{id, level, name.empty() ? id : name, "", std::move(parent), kind});
    frame.node_id = id;
}

void XMLCALL on_start(void* user, const XML_Char* raw_name, const XML_Char** attrs)
{
    auto& state = *static_cast<ParseState*>(user);
    auto [ns, local] = split_name(raw_name);
    Frame frame;

    if (ns != kBpmnModelNs) {
        state.stack.push_back(frame);
        return;
    }
    state.seen_bpmn_ns = true;

    const Frame* parent = state.container();
    const bool in_process = parent != nullptr;

    if (local == "process") {
        if (!state.process_done && !in_process && state.model.nodes.empty()) {
            frame.role = Frame::Role::process;
            add_node(state, attrs, Level::process, NodeKind::process, std::nullopt, frame);
        }
    } else if (in_process && !state.inside_leaf()) {
        if (kSubprocessElements.contains(local)) {
            if (parent->role == Frame::Role::process) {
                frame.role = Frame::Role::subprocess;
                add_node(state, attrs, Level::subprocess, NodeKind::subprocess, parent->node_id, frame);
            } else {
                frame.role = Frame::Role::nested_subprocess;
                frame.node_id = parent->node_id;
            }
        } else if (kTaskElements.contains(local)) {
            frame.role = Frame::Role::leaf;
            add_node(state, attrs, Level::task, NodeKind::task, parent->node_id, frame);
        } else if (kThrowEventElements.contains(local)) {
            frame.role = Frame::Role::leaf;
            add_node(state, attrs, Level::task, NodeKind::throwing_event, parent->node_id, frame);
        }
    }
    state.stack.push_back(std::move(frame));
}

void XMLCALL on_end(void* user, const XML_Char*)
{
    auto& state = *static_cast<ParseState*>(user);
    if (!state.stack.empty()) {
        if (state.stack.back().role == Frame::Role::process) {
            state.process_done = true;
        }
        state.stack.pop_back();
    }
}

}  // namespace

ProcessModel extract_bpmn_skeleton(std::string_view bpmn_xml)
{
    std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
        XML_ParserCreateNS(nullptr, kNsSeparator), &XML_ParserFree);
    if (!parser) {
        throw Error("cannot allocate XML parser");
    }

    ParseState state;
    state.parser = parser.get();
    XML_SetUserData(parser.get(), &state);
    XML_SetElementHandler(parser.get(), on_start, on_end);

    if (XML_Parse(parser.get(), bpmn_xml.data(), static_cast<int>(bpmn_xml.size()), XML_TRUE) ==
        XML_STATUS_ERROR) {
        throw ParseError("malformed BPMN XML at line " + std::to_string(XML_GetCurrentLineNumber(parser.get())) +
                             ", column " + std::to_string(XML_GetCurrentColumnNumber(parser.get())) + ": " +
                             XML_ErrorString(XML_GetErrorCode(parser.get())),
                         std::string(bpmn_xml));
    }
    if (!state.seen_bpmn_ns) {
        throw ParseError("document does not use the BPMN 2.0 model namespace", std::string(bpmn_xml));
    }
    if (state.model.nodes.empty()) {
        throw ParseError("empty model: no process element found", std::string(bpmn_xml));
    }

    auto& model = state.model;
    model.model_id = model.root().node_id;
    model.context.business_id = model.model_id;
    model.bpmn_xml = std::string(bpmn_xml);
    model.complete = false;
    return std::move(model);
}

}  // namespace regrel
