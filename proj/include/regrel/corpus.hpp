#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "regrel/relevance.hpp"

namespace regrel {

enum class Origin { internal, external };

/// Relevance group of a paragraph relative to one business and process:
/// A = business and process relevant, B = business relevant only, C = neither.
enum class Group { A, B, C };

std::string_view to_string(Origin origin);
Origin origin_from_string(std::string_view text);
std::string_view to_string(Group group);
Group group_from_string(std::string_view text);

struct RegulatoryDocument {
    std::string doc_id;
    std::string title;
    Origin origin = Origin::external;
    std::string jurisdiction;
    std::string applicable_domain;  // "domain-independent" when not tied to a domain
    std::optional<std::string> source_uri;

    bool operator==(const RegulatoryDocument&) const = default;
};

struct Paragraph {
    std::string para_id;
    std::string doc_id;
    std::string section_title;
    std::optional<std::string> subsection;
    std::string body;
    std::optional<Group> group;  // present in study sets, may be absent in a raw corpus
    std::optional<RelevanceType> gold_type_hint;

    bool operator==(const Paragraph&) const = default;
};

json to_json(const RegulatoryDocument& doc);
RegulatoryDocument document_from_json(const json& j);
std::vector<RegulatoryDocument> load_documents(const std::vector<json>& records);

/// Serializes with the study-set keys when `with_group` is set and the group is known.
json to_json(const Paragraph& para, bool with_group = true);

struct Corpus {
    std::vector<RegulatoryDocument> documents;
    std::vector<Paragraph> paragraphs;

    const Paragraph* find_paragraph(std::string_view para_id) const;
    const RegulatoryDocument* find_document(std::string_view doc_id) const;

    bool operator==(const Corpus&) const = default;
};

enum class SourceFormat { plaintext, jsonl };
SourceFormat source_format_from_string(std::string_view text);

struct DocumentSource {
    std::string name;  // file name; the stem becomes the doc_id for plaintext
    std::string content;
};

struct IngestFlag {
    std::string source;
    std::string fragment;  // para_id or "<source>:<line>"
    std::string reason;
};

struct IngestReport {
    std::size_t accepted = 0;
    std::vector<IngestFlag> skipped;
    std::vector<std::string> notes;
};

struct IngestResult {
    Corpus corpus;
    IngestReport report;
};

/// Builds a corpus from raw sources. When `documents` is non-empty every
/// paragraph must reference one of them and group C may only occur in external
/// documents. Suspected tables of contents, tables and empty bodies are skipped
/// and listed in the report. Duplicate para_ids and unknown group tags throw
/// ValidationError.
///
/// Plaintext sources are one document per source: lines starting with "# " set
/// the section title, "## " the subsection, and blank lines separate paragraphs.
IngestResult ingest_documents(std::span<const DocumentSource> sources, SourceFormat format,
                              std::span<const RegulatoryDocument> documents = {});

/// Returns the reason a fragment looks like non-content (table of contents or
/// table), or nothing for ordinary prose.
std::optional<std::string> detect_non_content(std::string_view body);

std::string export_corpus_jsonl(const Corpus& corpus, bool with_group = false);

// ---------------------------------------------------------------------------
// Study sets

struct Composition {
    std::size_t total = 0;
    std::size_t group_a = 0;
    std::size_t group_a_compliance = 0;
    std::size_t group_a_informative = 0;
    std::size_t group_a_untyped = 0;
    std::size_t group_b = 0;
    std::size_t group_c = 0;
    std::size_t ungrouped = 0;

    bool operator==(const Composition&) const = default;
};

struct StudySet {
    std::string use_case_id;
    std::vector<Paragraph> paragraphs;
    Composition composition;

    const Paragraph* find(std::string_view para_id) const;
};

/// Counts groups, and group A relevance types from `type_of` when given, else
/// from each paragraph's gold_type_hint.
Composition compute_composition(std::span<const Paragraph> paragraphs,
                                const std::map<std::string, RelevanceType>* type_of = nullptr);

StudySet make_study_set(std::string use_case_id, std::vector<Paragraph> paragraphs,
                        const std::map<std::string, RelevanceType>* type_of = nullptr);

/// Loads `study_set.jsonl` records. Every record must carry a group.
StudySet load_study_set(std::string use_case_id, const std::vector<json>& records);

struct ExpectedComposition {
    std::optional<std::size_t> total;
    std::optional<std::size_t> group_a_compliance;
    std::optional<std::size_t> group_a_informative;
    std::optional<std::size_t> group_b;
    std::optional<std::size_t> group_c;
};

ExpectedComposition expected_composition_from_json(const json& j);

struct ConstraintResult {
    std::string constraint;
    std::size_t expected = 0;
    std::size_t actual = 0;
    bool passed = false;
};

struct ValidationReport {
    std::vector<ConstraintResult> results;
    bool passed() const;
};

json to_json(const ValidationReport& report);

/// Never throws on a mismatch: every failure is a report entry. When `corpus`
/// is given, membership of every para_id is checked as well.
ValidationReport validate_study_set(const StudySet& set, const ExpectedComposition& expected,
                                    const Corpus* corpus = nullptr);

}  // namespace regrel
