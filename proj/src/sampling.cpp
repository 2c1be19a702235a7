#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "openenv/data.hpp"
#include "openenv/error.hpp"
#include "openenv/random.hpp"

namespace openenv {

std::pair<std::vector<std::size_t>, std::size_t> strata_of(const Dataset& ds, StrataMode mode) {
    const bool use_class = ds.schema.is_classification() && mode != StrataMode::split_only;
    const bool use_split = ds.has_splits() && mode != StrataMode::class_only;
    std::map<std::pair<int, int>, std::size_t> index;
    std::vector<std::pair<int, int>> keys(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        keys[i] = {use_split ? static_cast<int>(ds.splits[i]) : 0, use_class ? static_cast<int>(ds.targets[i]) : 0};
        index.emplace(keys[i], 0);
    }
    // Strata are numbered in (split, class) order so apportionment ties resolve reproducibly.
    std::size_t next = 0;
    for (auto& [key, idx] : index) idx = next++;
    std::vector<std::size_t> out(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) out[i] = index.at(keys[i]);
    return {out, index.size()};
}

std::vector<std::size_t> apportion(std::span<const std::size_t> sizes, std::size_t total) {
    const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (total > n) throw DataError("cannot apportion more items than available");
    std::vector<std::size_t> quota(sizes.size(), 0);
    if (n == 0) return quota;
    std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder numerator, group)
    std::size_t assigned = 0;
    for (std::size_t g = 0; g < sizes.size(); ++g) {
        // Exact integer arithmetic: quota = floor(total * size / n), remainder = total * size mod n.
        const auto prod = static_cast<unsigned __int128>(total) * sizes[g];
        quota[g] = static_cast<std::size_t>(prod / n);
        remainders.emplace_back(static_cast<std::size_t>(prod % n), g);
        assigned += quota[g];
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < total && r < remainders.size(); ++r) {
        const auto g = remainders[r].second;
        if (quota[g] < sizes[g]) {
            ++quota[g];
            ++assigned;
        }
    }
    return quota;
}

Dataset stratified_subsample(const Dataset& ds, std::size_t cap, std::uint64_t seed, StrataMode mode) {
    if (cap == 0) throw DataError("subsample cap must be positive");
    const auto [stratum, count] = strata_of(ds, mode);
    if (cap < count) {
        throw DataError("subsample cap " + std::to_string(cap) + " is smaller than the number of strata (" +
                        std::to_string(count) + ")");
    }
    if (ds.size() <= cap) return ds;

    std::vector<std::vector<std::size_t>> members(count);
    for (std::size_t i = 0; i < ds.size(); ++i) members[stratum[i]].push_back(i);
    std::vector<std::size_t> sizes(count);
    for (std::size_t s = 0; s < count; ++s) sizes[s] = members[s].size();
    const auto quota = apportion(sizes, cap);

    Rng rng(seed);
    std::vector<std::size_t> chosen;
    chosen.reserve(cap);
    for (std::size_t s = 0; s < count; ++s) {
        auto picked = sample_without_replacement(members[s], quota[s], rng);
        chosen.insert(chosen.end(), picked.begin(), picked.end());
    }
    std::sort(chosen.begin(), chosen.end());
    return ds.subset(chosen);
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double test_fraction, std::uint64_t seed,
                                          bool stratify) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test fraction must lie in (0, 1), got " + std::to_string(test_fraction));
    }
    const auto n = ds.size();
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    if (n_test == 0 || n_test >= n) {
        throw DataError("holdout split of " + std::to_string(n) + " rows at fraction " +
                        std::to_string(test_fraction) + " leaves an empty part");
    }
    std::vector<std::size_t> stratum(n, 0);
    std::size_t count = 1;
    if (stratify && ds.schema.is_classification()) {
        std::tie(stratum, count) = strata_of(ds, StrataMode::class_only);
    }
    std::vector<std::vector<std::size_t>> members(count);
    for (std::size_t i = 0; i < n; ++i) members[stratum[i]].push_back(i);
    std::vector<std::size_t> sizes(count);
    for (std::size_t s = 0; s < count; ++s) sizes[s] = members[s].size();
    const auto quota = apportion(sizes, n_test);

    Rng rng(seed);
    std::vector<bool> in_test(n, false);
    for (std::size_t s = 0; s < count; ++s) {
        for (auto i : sample_without_replacement(members[s], quota[s], rng)) in_test[i] = true;
    }
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < n; ++i) (in_test[i] ? test_rows : train_rows).push_back(i);
    return {ds.subset(train_rows), ds.subset(test_rows)};
}

}  // namespace openenv
