#pragma once

// Verdict parser fixtures shared by the unit and acceptance suites.

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "cve/judge.hpp"

namespace cve::test {

using VerdictCase = std::pair<std::string, std::array<int, 3>>;
using MalformedCase = std::pair<std::string, judge::VerdictParseError::Kind>;

inline const std::vector<VerdictCase>& well_formed_verdicts() {
    static const std::vector<VerdictCase> cases = {
        {R"({"structural":4,"damage":3,"realism":5})", {4, 3, 5}},
        {R"({"structural": 1, "damage": 1, "realism": 1})", {1, 1, 1}},
        {R"({"realism":2,"damage":5,"structural":3})", {3, 5, 2}},
        {"  {\"structural\":5,\"damage\":5,\"realism\":5}\n", {5, 5, 5}},
        {"```json\n{\"structural\":2,\"damage\":4,\"realism\":3}\n```", {2, 4, 3}},
        {"```\n{\"structural\":3,\"damage\":3,\"realism\":4}\n```", {3, 3, 4}},
        {R"({"structural":4,"damage":2,"realism":1,"notes":"roof geometry preserved"})", {4, 2, 1}},
        {"{\"structural\":4,\"damage\":2,\"realism\":3}\r\n", {4, 2, 3}},
        {"{\n  \"structural\": 2,\n  \"damage\": 2,\n  \"realism\": 5\n}", {2, 2, 5}},
        {R"({"structural":5,"damage":1,"realism":3})", {5, 1, 3}},
    };
    return cases;
}

/// Prose or renamed-key replies recovered by the labelled-number fallback.
inline const std::vector<VerdictCase>& lenient_verdicts() {
    static const std::vector<VerdictCase> cases = {
        {"Structural fidelity: 4\nDamage consistency: 3\nRealism: 5", {4, 3, 5}},
        {"structural=2, damage=2, realism=2", {2, 2, 2}},
        {"STRUCTURAL 5 DAMAGE 4 REALISM 3", {5, 4, 3}},
        {"Structure: 3/5. Damage: 2/5. Realism: 4/5.", {3, 2, 4}},
        {"I'd rate structural fidelity a 4, damage consistency a 1 and realism a 2.", {4, 1, 2}},
        {"- Structural: **3**\n- Damage: **3**\n- Realistic: **3**", {3, 3, 3}},
        {"Scores -> structural:1 damage:5 realism:4", {1, 5, 4}},
        {"Realism: 5\nDamage: 4\nStructural: 1", {1, 4, 5}},
        {R"({"structure_score":4,"damage_score":2,"realism_score":3})", {4, 2, 3}},
        {"Here is my assessment.\nStructural consistency = 2\nDamage severity match = 5\nRealism = 1", {2, 5, 1}},
    };
    return cases;
}

inline const std::vector<MalformedCase>& malformed_verdicts() {
    using Kind = judge::VerdictParseError::Kind;
    static const std::vector<MalformedCase> cases = {
        {"", Kind::Unparseable},
        {"I cannot evaluate these images.", Kind::Unparseable},
        {R"({"structural":"high","damage":3,"realism":4})", Kind::Unparseable},
        {R"({"structural":4,"damage":3})", Kind::MissingField},
        {"Structural: 4, Damage: 3", Kind::MissingField},
        {R"({"structural":6,"damage":3,"realism":4})", Kind::OutOfRange},
        {R"({"structural":0,"damage":3,"realism":4})", Kind::OutOfRange},
        {"Structural: 4\nDamage: -1\nRealism: 2", Kind::OutOfRange},
        {R"({"structural":3.5,"damage":3,"realism":4})", Kind::NonInteger},
        {"Structural: 4.5, Damage: 3, Realism: 2", Kind::NonInteger},
    };
    return cases;
}

}  // namespace cve::test
