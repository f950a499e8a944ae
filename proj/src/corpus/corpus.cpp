#include "regrel/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <regex>
#include <set>
#include <unordered_map>

#include "regrel/error.hpp"
#include "regrel/json_io.hpp"
#include "regrel/text.hpp"

namespace regrel {

std::string_view to_string(Origin origin)
{
    return origin == Origin::internal ? "internal" : "external";
}

Origin origin_from_string(std::string_view text)
{
    if (text == "internal") return Origin::internal;
    if (text == "external") return Origin::external;
    throw ValidationError("unknown document origin '" + std::string(text) + "'");
}

std::string_view to_string(Group group)
{
    switch (group) {
    case Group::A: return "A";
    case Group::B: return "B";
    case Group::C: return "C";
    }
    return "A";
}

Group group_from_string(std::string_view text)
{
    if (text == "A") return Group::A;
    if (text == "B") return Group::B;
    if (text == "C") return Group::C;
    throw ValidationError("unknown group tag '" + std::string(text) + "'");
}

SourceFormat source_format_from_string(std::string_view text)
{
    if (text == "jsonl") return SourceFormat::jsonl;
    if (text == "plaintext") return SourceFormat::plaintext;
    throw ValidationError("unknown source format '" + std::string(text) + "'");
}

json to_json(const RegulatoryDocument& doc)
{
    return json{{"doc_id", doc.doc_id},
                {"title", doc.title},
                {"origin", to_string(doc.origin)},
                {"jurisdiction", doc.jurisdiction},
                {"applicable_domain", doc.applicable_domain},
                {"source_uri", doc.source_uri ? json(*doc.source_uri) : json(nullptr)}};
}

RegulatoryDocument document_from_json(const json& j)
{
    RegulatoryDocument doc;
    doc.doc_id = required_string(j, "doc_id", "document");
    doc.title = required_string(j, "title", "document " + doc.doc_id);
    doc.origin = origin_from_string(required_string(j, "origin", "document " + doc.doc_id));
    doc.jurisdiction = optional_string(j, "jurisdiction").value_or("");
    doc.applicable_domain = optional_string(j, "applicable_domain").value_or("domain-independent");
    doc.source_uri = optional_string(j, "source_uri");
    return doc;
}

std::vector<RegulatoryDocument> load_documents(const std::vector<json>& records)
{
    std::vector<RegulatoryDocument> docs;
    std::set<std::string> seen;
    for (const auto& record : records) {
        auto doc = document_from_json(record);
        if (!seen.insert(doc.doc_id).second) {
            throw ValidationError("duplicate doc_id '" + doc.doc_id + "'");
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

json to_json(const Paragraph& para, bool with_group)
{
    json j{{"para_id", para.para_id},
           {"doc_id", para.doc_id},
           {"section_title", para.section_title},
           {"subsection", para.subsection ? json(*para.subsection) : json(nullptr)},
           {"body", para.body}};
    if (with_group && para.group) {
        j["group"] = to_string(*para.group);
        if (para.gold_type_hint) {
            j["gold_type_hint"] = to_string(*para.gold_type_hint);
        }
    }
    return j;
}

const Paragraph* Corpus::find_paragraph(std::string_view para_id) const
{
    auto it = std::find_if(paragraphs.begin(), paragraphs.end(),
                           [&](const Paragraph& p) { return p.para_id == para_id; });
    return it == paragraphs.end() ? nullptr : &*it;
}

const RegulatoryDocument* Corpus::find_document(std::string_view doc_id) const
{
    auto it = std::find_if(documents.begin(), documents.end(),
                           [&](const RegulatoryDocument& d) { return d.doc_id == doc_id; });
    return it == documents.end() ? nullptr : &*it;
}

namespace {

std::vector<std::string_view> non_blank_lines(std::string_view body)
{
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= body.size()) {
        auto end = body.find('\n', start);
        if (end == std::string_view::npos) {
            end = body.size();
        }
        auto line = body.substr(start, end - start);
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
            lines.push_back(line);
        }
        if (end == body.size()) {
            break;
        }
        start = end + 1;
    }
    return lines;
}

// "1. Scope", "2.3 Claims", "a) Notice", "(iv) Fees", "B. Annex"
bool is_short_heading(std::string_view line)
{
    static const std::regex heading(
        R"(^\s*(?:(?:\d+(?:\.\d+)*\.?|[A-Za-z][.)]|[ivxlcdmIVXLCDM]+[.)])|\(\s*(?:\d+|[A-Za-z]|[ivxlcdm]+)\s*\))\s+(\S.*)$)");
    std::match_results<std::string_view::const_iterator> match;
    if (!std::regex_match(line.begin(), line.end(), match, heading)) {
        return false;
    }
    return word_count(std::string_view(&*match[1].first, static_cast<std::size_t>(match[1].length()))) < 5;
}

bool has_multiple_cells(std::string_view line)
{
    auto first = line.find_first_not_of(" \t\r");
    auto last = line.find_last_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return false;
    }
    line = line.substr(first, last - first + 1);
    std::size_t cells = 1;
    for (std::size_t i = 0; i < line.size(); ++i) {
        bool separator = line[i] == '\t' || (line[i] == ' ' && i + 1 < line.size() && line[i + 1] == ' ');
        if (!separator) {
            continue;
        }
        while (i + 1 < line.size() && (line[i + 1] == ' ' || line[i + 1] == '\t')) {
            ++i;
        }
        ++cells;
    }
    return cells >= 2;
}

bool has_tokens(std::string_view body) { return !tokenize(body).empty(); }

struct IngestState {
    std::span<const RegulatoryDocument> documents;
    std::unordered_map<std::string, const RegulatoryDocument*> doc_index;
    std::set<std::string> para_ids;
    IngestResult result;

    void add(const std::string& source, Paragraph para)
    {
        if (!para_ids.insert(para.para_id).second) {
            throw ValidationError("duplicate para_id '" + para.para_id + "'");
        }
        if (!has_tokens(para.body)) {
            result.report.skipped.push_back({source, para.para_id, "empty body"});
            return;
        }
        if (auto reason = detect_non_content(para.body)) {
            result.report.skipped.push_back({source, para.para_id, *reason});
            return;
        }
        if (!documents.empty()) {
            auto it = doc_index.find(para.doc_id);
            if (it == doc_index.end()) {
                throw ValidationError("paragraph '" + para.para_id + "' references unknown doc_id '" +
                                      para.doc_id + "'");
            }
            if (para.group == Group::C && it->second->origin == Origin::internal) {
                throw ValidationError("paragraph '" + para.para_id +
                                      "' is group C but its document is internal");
            }
        }
        result.corpus.paragraphs.push_back(std::move(para));
        ++result.report.accepted;
    }
};

Paragraph paragraph_from_record(const json& record, const std::string& source)
{
    if (!record.is_object()) {
        throw ValidationError(source + ": record is not an object");
    }
    Paragraph para;
    para.para_id = required_string(record, "para_id", source);
    const auto context = source + " record " + para.para_id;
    para.doc_id = required_string(record, "doc_id", context);
    para.section_title = required_string(record, "section_title", context);
    para.subsection = optional_string(record, "subsection");
    para.body = required_string(record, "body", context);
    if (auto group = optional_string(record, "group")) {
        para.group = group_from_string(*group);
    }
    if (auto hint = optional_string(record, "gold_type_hint")) {
        para.gold_type_hint = relevance_from_string(*hint);
    }
    return para;
}

void ingest_plaintext(const DocumentSource& source, IngestState& state)
{
    const auto doc_id = std::filesystem::path(source.name).stem().string();
    std::string section;
    std::optional<std::string> subsection;
    std::string body;
    std::size_t index = 0;

    auto flush = [&] {
        if (body.empty()) {
            return;
        }
        ++index;
        char suffix[16];
        std::snprintf(suffix, sizeof(suffix), "-%04zu", index);
        Paragraph para{doc_id + suffix, doc_id, section, subsection, body, std::nullopt, std::nullopt};
        body.clear();
        state.add(source.name, std::move(para));
    };

    std::size_t start = 0;
    const std::string_view content = source.content;
    while (start <= content.size()) {
        auto end = content.find('\n', start);
        if (end == std::string_view::npos) {
            end = content.size();
        }
        auto line = content.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            flush();
        } else if (line.starts_with("## ")) {
            flush();
            subsection = normalize_whitespace(line.substr(3));
        } else if (line.starts_with("# ")) {
            flush();
            section = normalize_whitespace(line.substr(2));
            subsection.reset();
        } else {
            if (!body.empty()) {
                body += '\n';
            }
            body += line;
        }
        if (end == content.size()) {
            break;
        }
        start = end + 1;
    }
    flush();
}

}  // namespace

std::optional<std::string> detect_non_content(std::string_view body)
{
    auto lines = non_blank_lines(body);

    std::size_t run = 0;
    for (auto line : lines) {
        run = is_short_heading(line) ? run + 1 : 0;
        if (run >= 3) {
            return "suspected table of contents";
        }
    }

    if (lines.size() >= 2) {
        auto tabular = std::count_if(lines.begin(), lines.end(), has_multiple_cells);
        if (static_cast<std::size_t>(tabular) * 2 > lines.size()) {
            return "suspected table";
        }
    }
    return std::nullopt;
}

IngestResult ingest_documents(std::span<const DocumentSource> sources, SourceFormat format,
                              std::span<const RegulatoryDocument> documents)
{
    IngestState state;
    state.documents = documents;
    for (const auto& doc : documents) {
        if (!state.doc_index.emplace(doc.doc_id, &doc).second) {
            throw ValidationError("duplicate doc_id '" + doc.doc_id + "'");
        }
    }
    state.result.corpus.documents.assign(documents.begin(), documents.end());
    if (documents.empty()) {
        state.result.report.notes.push_back("no document registry supplied; doc_id references not checked");
    }

    for (const auto& source : sources) {
        if (format == SourceFormat::jsonl) {
            for (const auto& record : parse_jsonl(source.content, source.name)) {
                state.add(source.name, paragraph_from_record(record, source.name));
            }
        } else {
            ingest_plaintext(source, state);
        }
    }
    return std::move(state.result);
}

std::string export_corpus_jsonl(const Corpus& corpus, bool with_group)
{
    std::vector<json> records;
    records.reserve(corpus.paragraphs.size());
    for (const auto& para : corpus.paragraphs) {
        records.push_back(to_json(para, with_group));
    }
    return to_jsonl(records);
}

}  // namespace regrel
