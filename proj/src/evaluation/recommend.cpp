#include <array>
#include <tuple>

#include "regrel/error.hpp"
#include "regrel/evaluation.hpp"

namespace regrel {

std::string_view to_string(MethodCombination combination)
{
    switch (combination) {
    case MethodCombination::expert_only:
        return "expert_only";
    case MethodCombination::sota_nlp_lir_plus_expert:
        return "sota_nlp_lir_plus_expert";
    case MethodCombination::gpt_plus_expert:
        return "gpt_plus_expert";
    case MethodCombination::crowd_plus_expert:
        return "crowd_plus_expert";
    }
    return "expert_only";
}

Usage usage_from_string(std::string_view text)
{
    if (text == "low") {
        return Usage::low;
    }
    if (text == "high") {
        return Usage::high;
    }
    if (text == "low_to_high" || text == "low-to-high" || text == "low-high") {
        return Usage::low_to_high;
    }
    throw ValidationError("unknown usage '" + std::string(text) + "' (expected low, high or low_to_high)");
}

Intensity intensity_from_string(std::string_view text)
{
    if (text == "low") {
        return Intensity::low;
    }
    if (text == "high") {
        return Intensity::high;
    }
    throw ValidationError("unknown intensity '" + std::string(text) + "' (expected low or high)");
}

namespace {

struct ScenarioRow {
    ScenarioProfile profile;
    MethodCombination combination;
};

// Usage low_to_high in a row accepts either usage.
constexpr std::array<ScenarioRow, 4> kScenarios = {{
    {{Usage::low_to_high, Intensity::high, Intensity::low, Intensity::low}, MethodCombination::expert_only},
    {{Usage::high, Intensity::high, Intensity::high, Intensity::high}, MethodCombination::sota_nlp_lir_plus_expert},
    {{Usage::high, Intensity::low, Intensity::high, Intensity::high}, MethodCombination::gpt_plus_expert},
    {{Usage::low_to_high, Intensity::low, Intensity::low, Intensity::low}, MethodCombination::crowd_plus_expert},
}};

bool usage_matches(Usage row, Usage wanted)
{
    return row == Usage::low_to_high || row == wanted;
}

}  // namespace

Recommendation recommend_methods(const ScenarioProfile& profile)
{
    using Mismatch = std::tuple<int, int, int, int>;
    std::optional<Mismatch> best;
    Recommendation out{MethodCombination::expert_only, false, 0};

    for (std::size_t i = 0; i < kScenarios.size(); ++i) {
        const auto& row = kScenarios[i].profile;
        Mismatch mismatch{row.impact != profile.impact, row.dynamics != profile.dynamics,
                          row.regulatory_input != profile.regulatory_input, !usage_matches(row.usage, profile.usage)};
        if (mismatch == Mismatch{0, 0, 0, 0}) {
            return {kScenarios[i].combination, true, static_cast<int>(i) + 1};
        }
        if (!best || mismatch < *best) {
            best = mismatch;
            out = {kScenarios[i].combination, false, static_cast<int>(i) + 1};
        }
    }
    return out;
}

}  // namespace regrel
