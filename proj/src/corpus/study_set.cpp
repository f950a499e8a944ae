#include <algorithm>
#include <set>

#include "regrel/corpus.hpp"
#include "regrel/error.hpp"
#include "regrel/json_io.hpp"

namespace regrel {

const Paragraph* StudySet::find(std::string_view para_id) const
{
    auto it = std::find_if(paragraphs.begin(), paragraphs.end(),
                           [&](const Paragraph& p) { return p.para_id == para_id; });
    return it == paragraphs.end() ? nullptr : &*it;
}

Composition compute_composition(std::span<const Paragraph> paragraphs,
                                const std::map<std::string, RelevanceType>* type_of)
{
    Composition c;
    c.total = paragraphs.size();
    for (const auto& para : paragraphs) {
        if (!para.group) {
            ++c.ungrouped;
            continue;
        }
        switch (*para.group) {
        case Group::A: {
            ++c.group_a;
            std::optional<RelevanceType> type = para.gold_type_hint;
            if (type_of != nullptr) {
                auto it = type_of->find(para.para_id);
                type = it == type_of->end() ? std::nullopt : std::optional(it->second);
            }
            if (type == RelevanceType::compliance) {
                ++c.group_a_compliance;
            } else if (type == RelevanceType::informative) {
                ++c.group_a_informative;
            } else {
                ++c.group_a_untyped;
            }
            break;
        }
        case Group::B: ++c.group_b; break;
        case Group::C: ++c.group_c; break;
        }
    }
    return c;
}

StudySet make_study_set(std::string use_case_id, std::vector<Paragraph> paragraphs,
                        const std::map<std::string, RelevanceType>* type_of)
{
    std::set<std::string> ids;
    for (const auto& para : paragraphs) {
        if (!ids.insert(para.para_id).second) {
            throw ValidationError("duplicate para_id '" + para.para_id + "' in study set");
        }
    }
    StudySet set;
    set.use_case_id = std::move(use_case_id);
    set.composition = compute_composition(paragraphs, type_of);
    set.paragraphs = std::move(paragraphs);
    return set;
}

StudySet load_study_set(std::string use_case_id, const std::vector<json>& records)
{
    std::vector<Paragraph> paragraphs;
    paragraphs.reserve(records.size());
    for (const auto& record : records) {
        Paragraph para;
        para.para_id = required_string(record, "para_id", "study set record");
        const auto context = "study set record " + para.para_id;
        para.doc_id = required_string(record, "doc_id", context);
        para.section_title = required_string(record, "section_title", context);
        if (auto it = record.find("subsection"); it != record.end() && it->is_string()) {
            para.subsection = it->get<std::string>();
        }
        para.body = required_string(record, "body", context);
        para.group = group_from_string(required_string(record, "group", context));
        if (auto it = record.find("gold_type_hint"); it != record.end() && it->is_string()) {
            para.gold_type_hint = relevance_from_string(it->get<std::string>());
        }
        paragraphs.push_back(std::move(para));
    }
    return make_study_set(std::move(use_case_id), std::move(paragraphs));
}

ExpectedComposition expected_composition_from_json(const json& j)
{
    auto count = [&](const char* key) -> std::optional<std::size_t> {
        if (!j.contains(key) || j[key].is_null()) {
            return std::nullopt;
        }
        if (!j[key].is_number_unsigned() && !j[key].is_number_integer()) {
            throw ValidationError(std::string("expected composition field '") + key + "' must be an integer");
        }
        return j[key].get<std::size_t>();
    };
    return {count("total"), count("group_a_compliance"), count("group_a_informative"),
            count("group_b"), count("group_c")};
}

bool ValidationReport::passed() const
{
    return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

json to_json(const ValidationReport& report)
{
    json entries = json::array();
    for (const auto& r : report.results) {
        entries.push_back({{"constraint", r.constraint},
                           {"expected", r.expected},
                           {"actual", r.actual},
                           {"passed", r.passed}});
    }
    return json{{"passed", report.passed()}, {"constraints", entries}};
}

ValidationReport validate_study_set(const StudySet& set, const ExpectedComposition& expected,
                                    const Corpus* corpus)
{
    ValidationReport report;
    const auto recomputed = compute_composition(set.paragraphs);
    const auto& c = set.composition;

    auto check = [&](std::string name, std::optional<std::size_t> want, std::size_t got) {
        if (want) {
            report.results.push_back({std::move(name), *want, got, *want == got});
        }
    };
    check("total", expected.total, c.total);
    check("group_a_compliance", expected.group_a_compliance, c.group_a_compliance);
    check("group_a_informative", expected.group_a_informative, c.group_a_informative);
    check("group_b", expected.group_b, c.group_b);
    check("group_c", expected.group_c, c.group_c);

    const auto group_sum = c.group_a + c.group_b + c.group_c + c.ungrouped;
    report.results.push_back({"group_sum_equals_total", c.total, group_sum, group_sum == c.total});
    const bool stored_matches = recomputed.total == c.total && recomputed.group_a == c.group_a &&
                                recomputed.group_b == c.group_b && recomputed.group_c == c.group_c;
    report.results.push_back({"stored_composition_matches_paragraphs", c.total, recomputed.total,
                              stored_matches});

    if (corpus != nullptr) {
        std::size_t missing = 0;
        for (const auto& para : set.paragraphs) {
            if (corpus->find_paragraph(para.para_id) == nullptr) {
                ++missing;
            }
        }
        report.results.push_back({"paragraphs_in_corpus", 0, missing, missing == 0});
    }
    return report;
}

}  // namespace regrel
