#include <sstream>

#include "regrel/error.hpp"
#include "regrel/llm.hpp"
#include "regrel/text.hpp"

namespace regrel {

std::string_view to_string(PromptIteration iteration)
{
    switch (iteration) {
    case PromptIteration::v1:
        return "v1";
    case PromptIteration::v2:
        return "v2";
    case PromptIteration::v3:
        return "v3";
    }
    return "v3";
}

PromptIteration prompt_iteration_from_string(std::string_view text)
{
    if (text == "v1" || text == "1") {
        return PromptIteration::v1;
    }
    if (text == "v2" || text == "2") {
        return PromptIteration::v2;
    }
    if (text == "v3" || text == "3") {
        return PromptIteration::v3;
    }
    throw ValidationError("unknown prompt iteration '" + std::string(text) + "' (expected v1, v2 or v3)");
}

namespace {

constexpr std::string_view kTaskIntro = R"(# Task
You support a compliance team. Decide whether the regulatory text in the last part of this message is relevant for the business process described in the middle part.

Judge relevance on three levels of detail:
- Level 1: the process as a whole.
- Level 2: each sub-process of the process.
- Level 3: each task and throwing event within a sub-process.

Use one of three relevance types for every judgment:
- "compliance": the text describes an action the organization must carry out in this process, sub-process or task to be compliant.
- "informative": the text is related to the process, sub-process or task but requires no clear action from the organization.
- "irrelevant": the text has no bearing on it.

A text that is relevant for a task or event is also relevant for the sub-process containing it, and a text that is relevant for a sub-process is also relevant for the process.

Refer to sub-processes, tasks and events only by the identifiers shown in square brackets.)";

constexpr std::string_view kReplySchema = R"(Answer with a single JSON object and nothing else, using exactly these keys:
{"level1": "irrelevant|informative|compliance", "level2": {"<sub-process id>": "informative|compliance"}, "level3": {"<task or event id>": "informative|compliance"}, "justification": "<short reasoning>"}
List only relevant sub-processes, tasks and events under "level2" and "level3"; omitted identifiers count as irrelevant.)";

void append_node(std::ostringstream& out, const ProcessNode& node, std::string_view indent)
{
    out << indent << "- [" << node.node_id << "] ";
    if (node.kind == NodeKind::throwing_event) {
        out << "(event) ";
    }
    out << node.name << ": " << node.description << "\n";
}

}  // namespace

std::string build_task_block(PromptIteration iteration)
{
    std::string block(kTaskIntro);
    if (iteration != PromptIteration::v1) {
        block += "\n\n";
        block += kClearRelationInstruction;
    }
    if (iteration == PromptIteration::v3) {
        block += "\n\n";
        block += kRecallPriorityInstruction;
    }
    block += "\n\n";
    block += kReplySchema;
    return block;
}

std::string build_business_block(const ProcessModel& model)
{
    const auto& ctx = model.context;
    const auto& root = model.root();

    std::ostringstream out;
    out << "# Business process\n";
    out << "Organizational context: business " << ctx.business_id;
    if (!ctx.location.empty()) {
        out << ", located in " << ctx.location;
    }
    if (!ctx.domain.empty()) {
        out << ", domain " << ctx.domain;
    }
    if (!ctx.size.empty()) {
        out << ", size " << ctx.size;
    }
    out << ".\n\n";
    out << "Process [" << root.node_id << "] " << root.name << ": " << root.description << "\n";

    const auto top = model.children(root.node_id);
    bool header = false;
    for (const auto* node : top) {
        if (node->level != Level::subprocess) {
            continue;
        }
        if (!header) {
            out << "\nSub-processes with their tasks and events:\n";
            header = true;
        }
        append_node(out, *node, "");
        for (const auto* leaf : model.children(node->node_id)) {
            append_node(out, *leaf, "    ");
        }
    }
    bool loose_header = false;
    for (const auto* node : top) {
        if (node->level != Level::task) {
            continue;
        }
        if (!loose_header) {
            out << "\nTasks and events directly under the process:\n";
            loose_header = true;
        }
        append_node(out, *node, "");
    }
    auto block = out.str();
    while (!block.empty() && block.back() == '\n') {
        block.pop_back();
    }
    return block;
}

std::string build_regulation_block(const Paragraph& para, const RegulatoryDocument& doc, PromptIteration iteration)
{
    std::ostringstream out;
    out << "# Regulatory text\n";
    out << "Document: " << doc.title << "\n";
    out << "Section: " << para.section_title << "\n";
    if (para.subsection && !para.subsection->empty()) {
        out << "Subsection: " << *para.subsection << "\n";
    }
    if (iteration != PromptIteration::v1) {
        out << "Document applicability: " << (doc.origin == Origin::internal ? "internal" : "external")
            << " document, jurisdiction " << (doc.jurisdiction.empty() ? "unspecified" : doc.jurisdiction)
            << ", applicable domain " << (doc.applicable_domain.empty() ? "unspecified" : doc.applicable_domain)
            << ".\n";
    }
    out << "Paragraph [" << para.para_id << "]:\n" << para.body;
    return out.str();
}

RegulatoryDocument placeholder_document(const Paragraph& para)
{
    RegulatoryDocument doc;
    doc.doc_id = para.doc_id;
    doc.title = para.doc_id;
    return doc;
}

PromptBundle build_prompt(const ProcessModel& model, const Paragraph& para, const RegulatoryDocument& doc,
                          PromptIteration iteration)
{
    if (auto missing = model.missing_descriptions(); !missing.empty()) {
        std::string list;
        for (const auto& id : missing) {
            list += (list.empty() ? "" : ", ") + id;
        }
        throw ValidationError("process model is incomplete; nodes without description: " + list);
    }

    PromptBundle bundle;
    bundle.para_id = para.para_id;
    bundle.iteration = iteration;
    bundle.task_block = build_task_block(iteration);
    bundle.business_block = build_business_block(model);
    bundle.regulation_block = build_regulation_block(para, doc, iteration);
    bundle.rendered = bundle.task_block + "\n\n" + bundle.business_block + "\n\n" + bundle.regulation_block;
    bundle.word_count = word_count(bundle.rendered);
    if (iteration == PromptIteration::v3 && (bundle.word_count < 1500 || bundle.word_count > 2300)) {
        bundle.warnings.push_back("prompt has " + std::to_string(bundle.word_count) +
                                  " words, outside the usual 1500-2300");
    }
    return bundle;
}

}  // namespace regrel
