#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace textcausal {

// Stylized open-ended experiment: each unit writes a response whose topic
// is fully determined by its own treatment arm.
struct PotentialOutcomeTable {
    std::vector<std::string> units;
    // outcomes[i][t] = category unit i's text falls in under treatment t.
    std::vector<std::array<std::string, 2>> outcomes;
};

// Four respondents, two per theme pair: treated -> morals / polarization,
// control -> taxes / immigration.
PotentialOutcomeTable four_person_demo();

// g discovered from one realized randomization: one indicator per category
// actually observed, each unit mapped to its own category's indicator.
struct CategoryDiscovery {
    std::vector<std::string> categories;       // sorted, unique
    std::vector<std::string> realized;         // per unit
    std::vector<std::vector<int>> indicators;  // per unit, over `categories`
};

CategoryDiscovery discover_categories(const PotentialOutcomeTable& table,
                                      const std::vector<int>& t);

// balanced = half the units treated (rounded down); all = every 0/1 vector.
enum class AisvDesign { balanced, all };

// Unit whose measured value moves across two randomizations that agree on
// its own arm — the codebook itself shifted under it.
struct AisvWitness {
    int unit = 0;
    std::vector<int> t_a, t_b;
    std::vector<std::string> set_a, set_b;  // discovered categories under each
    std::string realized;                   // the unit's own category, same in both
};

struct AisvReport {
    int n_units = 0;
    AisvDesign design = AisvDesign::balanced;
    std::vector<std::string> labels;  // every category in the table, sorted
    // Assignments stored as bit masks (bit i = unit i treated) so the full
    // 2^20 enumeration stays cheap; use assignment() for the 0/1 vector.
    std::vector<std::uint32_t> assignments;
    std::vector<int> set_index;  // per assignment, into category_sets
    std::vector<std::vector<std::string>> category_sets;  // distinct, discovery order
    // per assignment x unit, row-major: index into `labels`
    std::vector<std::int16_t> unit_values;
    bool unstable = false;
    std::vector<AisvWitness> witnesses;  // first pair per (unit, arm)

    std::vector<int> assignment(int a) const;
    const std::string& value_label(int a, int i) const;
};

AisvReport enumerate_aisv(const PotentialOutcomeTable& table, AisvDesign design);

}  // namespace textcausal
