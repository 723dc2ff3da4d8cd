#pragma once

#include <vector>

#include "deepstruct/inference.hpp"
#include "deepstruct/region.hpp"

namespace deepstruct {

// Exact quantities by full enumeration; the ground truth every approximation
// is tested against. All enumerate at most `limit` configurations (default
// 1e7) and throw ValidationError beyond that.

inline constexpr long long kOracleLimit = 10000000;

// eps * ln sum_y exp(F(y)/eps) with streaming logsumexp; eps = 0 gives max F.
double brute_force_log_partition(const RegionGraph& g, const PotentialTables& f,
                                 double eps, long long limit = kOracleLimit);

// Exact region marginals of the distribution proportional to exp(F/eps);
// eps = 0 gives the uniform distribution over maximizing configurations.
BeliefSet brute_force_marginals(const RegionGraph& g, const PotentialTables& f,
                                double eps, long long limit = kOracleLimit);

// argmax_y F(y); ties resolved to the lexicographically smallest assignment.
std::vector<int> brute_force_map(const RegionGraph& g, const PotentialTables& f,
                                 long long limit = kOracleLimit);

}  // namespace deepstruct
