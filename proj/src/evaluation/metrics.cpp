#include <algorithm>
#include <cmath>
#include <set>

#include "regrel/error.hpp"
#include "regrel/evaluation.hpp"

namespace regrel {

double ConfusionCounts::accuracy() const
{
    return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
}

std::optional<double> ConfusionCounts::precision() const
{
    if (tp + fp == 0) {
        return std::nullopt;
    }
    return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

std::optional<double> ConfusionCounts::recall() const
{
    if (tp + fn == 0) {
        return std::nullopt;
    }
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other)
{
    tp += other.tp;
    fp += other.fp;
    tn += other.tn;
    fn += other.fn;
    return *this;
}

std::string_view to_string(PairUnit unit)
{
    return unit == PairUnit::restricted ? "restricted" : "all_paragraphs";
}

namespace {

void count_pair(ConfusionCounts& counts, bool gold_relevant, bool predicted_relevant)
{
    if (gold_relevant) {
        ++(predicted_relevant ? counts.tp : counts.fn);
    } else {
        ++(predicted_relevant ? counts.fp : counts.tn);
    }
}

void check_coverage(const Predictions& predictions, const GoldStandard& gold)
{
    std::vector<std::string> missing;
    for (const auto& [para_id, entry] : gold.labels) {
        if (!predictions.contains(para_id)) {
            missing.push_back(para_id);
        }
    }
    std::vector<std::string> extra;
    for (const auto& [para_id, labels] : predictions) {
        if (!gold.labels.contains(para_id)) {
            extra.push_back(para_id);
        }
    }
    if (missing.empty() && extra.empty()) {
        return;
    }
    auto list = [](const std::vector<std::string>& ids) {
        std::string out;
        for (std::size_t i = 0; i < ids.size() && i < 20; ++i) {
            out += (i ? ", " : "") + ids[i];
        }
        if (ids.size() > 20) {
            out += ", ... (" + std::to_string(ids.size()) + " total)";
        }
        return out;
    };
    std::string message = "predictions and gold cover different paragraphs";
    if (!missing.empty()) {
        message += "; missing predictions: " + list(missing);
    }
    if (!extra.empty()) {
        message += "; not in gold: " + list(extra);
    }
    throw ValidationError(message);
}

}  // namespace

ConfusionCounts confusion(const Predictions& predictions, const GoldStandard& gold, const ProcessModel& model,
                          Level level, PairUnit unit)
{
    check_coverage(predictions, gold);
    ConfusionCounts counts;

    if (level == Level::process) {
        for (const auto& [para_id, entry] : gold.labels) {
            count_pair(counts, is_relevant(entry.labels.level1), is_relevant(predictions.at(para_id).level1));
        }
        return counts;
    }

    const auto nodes = model.at_level(level);
    for (const auto& [para_id, entry] : gold.labels) {
        const auto& predicted = predictions.at(para_id);
        if (unit == PairUnit::restricted && !is_relevant(entry.labels.level1) && !predicted.any_relevant(level)) {
            continue;
        }
        for (const auto* node : nodes) {
            count_pair(counts, is_relevant(entry.labels.at(level, node->node_id)),
                       is_relevant(predicted.at(level, node->node_id)));
        }
    }
    return counts;
}

std::optional<double> GroupAccuracy::accuracy() const
{
    if (total == 0) {
        return std::nullopt;
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

std::map<Group, GroupAccuracy> group_accuracy(const Predictions& predictions, const GoldStandard& gold,
                                              const std::map<std::string, Group>& groups)
{
    check_coverage(predictions, gold);
    std::map<Group, GroupAccuracy> out{{Group::A, {}}, {Group::B, {}}, {Group::C, {}}};
    for (const auto& [para_id, entry] : gold.labels) {
        auto it = groups.find(para_id);
        if (it == groups.end()) {
            continue;
        }
        auto& acc = out[it->second];
        ++acc.total;
        if (is_relevant(entry.labels.level1) == is_relevant(predictions.at(para_id).level1)) {
            ++acc.correct;
        }
    }
    return out;
}

std::optional<double> TypeAccuracy::value() const
{
    if (gold_relevant == 0) {
        return std::nullopt;
    }
    return static_cast<double>(matched) / static_cast<double>(gold_relevant);
}

TypeAccuracy type_accuracy(const Predictions& predictions, const GoldStandard& gold)
{
    check_coverage(predictions, gold);
    TypeAccuracy out;
    for (const auto& [para_id, entry] : gold.labels) {
        if (!is_relevant(entry.labels.level1)) {
            continue;
        }
        ++out.gold_relevant;
        if (predictions.at(para_id).level1 == entry.labels.level1) {
            ++out.matched;
        }
    }
    return out;
}

double round_half_up(std::uint64_t num, std::uint64_t den, int decimals)
{
    if (den == 0) {
        throw ValidationError("round_half_up: zero denominator");
    }
    std::uint64_t scale = 1;
    for (int i = 0; i < decimals; ++i) {
        scale *= 10;
    }
    // Split off the integer part so the remainder arithmetic cannot overflow.
    const std::uint64_t whole = num / den;
    const std::uint64_t rest = num % den;
    const std::uint64_t rounded = whole * scale + (2 * rest * scale + den) / (2 * den);
    return static_cast<double>(rounded) / static_cast<double>(scale);
}

double round_half_up(double value, int decimals)
{
    const double scale = std::pow(10.0, decimals);
    return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

MetricsReport build_report(const Predictions& predictions, const GoldStandard& gold, const ProcessModel& model,
                           const std::map<std::string, Group>* groups, const std::vector<std::string>& excluded)
{
    GoldStandard scored = gold;
    for (const auto& para_id : excluded) {
        scored.labels.erase(para_id);
    }

    MetricsReport report;
    report.excluded = excluded;
    for (auto level : {Level::process, Level::subprocess, Level::task}) {
        report.levels[level] = {confusion(predictions, scored, model, level, PairUnit::restricted),
                                confusion(predictions, scored, model, level, PairUnit::all_paragraphs)};
    }
    if (groups != nullptr) {
        report.groups = group_accuracy(predictions, scored, *groups);
    }
    report.type = type_accuracy(predictions, scored);
    return report;
}

namespace {

json ratio_json(std::uint64_t num, std::uint64_t den)
{
    if (den == 0) {
        return nullptr;
    }
    return json{{"num", num},
                {"den", den},
                {"value", static_cast<double>(num) / static_cast<double>(den)},
                {"rounded", round_half_up(num, den)}};
}

json counts_json(const ConfusionCounts& c)
{
    return json{{"tp", c.tp},
                {"fp", c.fp},
                {"tn", c.tn},
                {"fn", c.fn},
                {"total", c.total()},
                {"accuracy", ratio_json(c.tp + c.tn, c.total())},
                {"precision", ratio_json(c.tp, c.tp + c.fp)},
                {"recall", ratio_json(c.tp, c.tp + c.fn)}};
}

}  // namespace

json to_json(const MetricsReport& report)
{
    json levels = json::object();
    for (const auto& [level, metrics] : report.levels) {
        auto j = counts_json(metrics.counts);
        j["unit"] = to_string(PairUnit::restricted);
        j["all_paragraphs"] = counts_json(metrics.counts_all_paragraphs);
        levels[std::to_string(static_cast<int>(level))] = j;
    }
    json groups = json::object();
    for (const auto& [group, acc] : report.groups) {
        groups[std::string(to_string(group))] = {{"correct", acc.correct},
                                                 {"total", acc.total},
                                                 {"accuracy", ratio_json(acc.correct, acc.total)}};
    }
    return json{{"method", report.method},
                {"levels", levels},
                {"groups", groups},
                {"type_accuracy", {{"matched", report.type.matched},
                                   {"gold_relevant", report.type.gold_relevant},
                                   {"accuracy", ratio_json(report.type.matched, report.type.gold_relevant)}}},
                {"excluded", report.excluded}};
}

}  // namespace regrel
