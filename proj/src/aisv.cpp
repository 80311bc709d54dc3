#include "textcausal/aisv.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "textcausal/errors.hpp"

namespace textcausal {

namespace {

constexpr int kMaxEnumUnits = 20;

void check_table(const PotentialOutcomeTable& t) {
    if (t.units.empty()) throw ContractError("potential-outcome table has no units");
    if (t.outcomes.size() != t.units.size())
        throw ContractError("potential-outcome table needs one outcome pair per unit");
    for (std::size_t i = 0; i < t.outcomes.size(); i++)
        if (t.outcomes[i][0].empty() || t.outcomes[i][1].empty())
            throw ContractError("unit " + t.units[i] + " is missing a potential outcome");
}

std::vector<std::uint32_t> enumerate_masks(int n, AisvDesign design) {
    std::vector<std::uint32_t> masks;
    if (design == AisvDesign::all) {
        masks.resize(std::size_t{1} << n);
        for (std::size_t m = 0; m < masks.size(); m++) masks[m] = (std::uint32_t)m;
        return masks;
    }
    // treated subsets of size n/2 in lexicographic position order
    int k = n / 2;
    std::vector<int> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
        std::uint32_t m = 0;
        for (int j : idx) m |= std::uint32_t{1} << j;
        masks.push_back(m);
        int j = k - 1;
        while (j >= 0 && idx[j] == n - k + j) j--;
        if (j < 0) break;
        idx[j]++;
        for (int l = j + 1; l < k; l++) idx[l] = idx[l - 1] + 1;
    }
    return masks;
}

}  // namespace

PotentialOutcomeTable four_person_demo() {
    PotentialOutcomeTable t;
    t.units = {"Person 1", "Person 2", "Person 3", "Person 4"};
    t.outcomes.push_back({"Taxes", "Candidate Morals"});
    t.outcomes.push_back({"Taxes", "Candidate Morals"});
    t.outcomes.push_back({"Immigration", "Polarization"});
    t.outcomes.push_back({"Immigration", "Polarization"});
    return t;
}

CategoryDiscovery discover_categories(const PotentialOutcomeTable& table,
                                      const std::vector<int>& t) {
    check_table(table);
    if (t.size() != table.units.size())
        throw ContractError("treatment vector covers " + std::to_string(t.size()) +
                            " units but the table has " + std::to_string(table.units.size()));
    CategoryDiscovery d;
    std::set<std::string> seen;
    d.realized.resize(t.size());
    for (std::size_t i = 0; i < t.size(); i++) {
        if (t[i] != 0 && t[i] != 1)
            throw ContractError("treatment values must be 0 or 1 (unit " + table.units[i] + ")");
        d.realized[i] = table.outcomes[i][t[i]];
        seen.insert(d.realized[i]);
    }
    d.categories.assign(seen.begin(), seen.end());
    d.indicators.resize(t.size());
    for (std::size_t i = 0; i < t.size(); i++) {
        std::vector<int> ind(d.categories.size(), 0);
        auto it = std::lower_bound(d.categories.begin(), d.categories.end(), d.realized[i]);
        ind[it - d.categories.begin()] = 1;
        d.indicators[i] = std::move(ind);
    }
    return d;
}

std::vector<int> AisvReport::assignment(int a) const {
    std::vector<int> t(n_units);
    for (int i = 0; i < n_units; i++) t[i] = (assignments[a] >> i) & 1u;
    return t;
}

const std::string& AisvReport::value_label(int a, int i) const {
    return labels[unit_values[(std::size_t)a * n_units + i]];
}

AisvReport enumerate_aisv(const PotentialOutcomeTable& table, AisvDesign design) {
    check_table(table);
    int n = (int)table.units.size();
    if (n > kMaxEnumUnits)
        throw ContractError("enumerating randomizations over " + std::to_string(n) +
                            " units is infeasible (cap " + std::to_string(kMaxEnumUnits) +
                            "); sample treatment vectors instead");

    AisvReport rep;
    rep.n_units = n;
    rep.design = design;

    std::set<std::string> all_labels;
    for (const auto& o : table.outcomes) {
        all_labels.insert(o[0]);
        all_labels.insert(o[1]);
    }
    rep.labels.assign(all_labels.begin(), all_labels.end());
    auto label_of = [&](int i, int t) {
        auto it = std::lower_bound(rep.labels.begin(), rep.labels.end(), table.outcomes[i][t]);
        return (std::int16_t)(it - rep.labels.begin());
    };
    std::array<std::vector<std::int16_t>, 2> lidx;
    for (int t : {0, 1}) {
        lidx[t].resize(n);
        for (int i = 0; i < n; i++) lidx[t][i] = label_of(i, t);
    }

    rep.assignments = enumerate_masks(n, design);
    const std::size_t n_assign = rep.assignments.size();
    rep.set_index.resize(n_assign);
    rep.unit_values.resize(n_assign * n);

    // category sets as bit masks over `labels` (at most 2n <= 40 of them)
    std::map<std::uint64_t, int> set_ids;
    for (std::size_t a = 0; a < n_assign; a++) {
        std::uint64_t s = 0;
        std::uint32_t m = rep.assignments[a];
        for (int i = 0; i < n; i++) {
            std::int16_t li = lidx[(m >> i) & 1u][i];
            rep.unit_values[a * n + i] = li;
            s |= std::uint64_t{1} << li;
        }
        auto [it, fresh] = set_ids.try_emplace(s, (int)rep.category_sets.size());
        if (fresh) {
            std::vector<std::string> cats;
            for (std::size_t li = 0; li < rep.labels.size(); li++)
                if (s & (std::uint64_t{1} << li)) cats.push_back(rep.labels[li]);
            rep.category_sets.push_back(std::move(cats));
        }
        rep.set_index[a] = it->second;
    }

    // A witness for unit i: two randomizations agreeing on i's arm whose
    // discovered codebooks differ, so i's measured value moves while its
    // own text stays fixed.  First such pair per (unit, arm).
    for (int i = 0; i < n; i++) {
        for (int t : {1, 0}) {
            std::size_t first = n_assign;
            for (std::size_t a = 0; a < n_assign; a++) {
                if ((int)((rep.assignments[a] >> i) & 1u) != t) continue;
                if (first == n_assign) {
                    first = a;
                } else if (rep.set_index[a] != rep.set_index[first]) {
                    AisvWitness w;
                    w.unit = i;
                    w.t_a = rep.assignment((int)first);
                    w.t_b = rep.assignment((int)a);
                    w.set_a = rep.category_sets[rep.set_index[first]];
                    w.set_b = rep.category_sets[rep.set_index[a]];
                    w.realized = table.outcomes[i][t];
                    rep.witnesses.push_back(std::move(w));
                    break;
                }
            }
        }
    }
    rep.unstable = !rep.witnesses.empty();
    return rep;
}

}  // namespace textcausal
