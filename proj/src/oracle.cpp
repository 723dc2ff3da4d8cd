#include "deepstruct/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace deepstruct {

namespace {

constexpr double kTieTol = 1e-12;

// Calls fn(labels, score) for every full configuration in lexicographic order.
template <class Fn>
void enumerate(const RegionGraph& g, const PotentialTables& f, long long limit, Fn&& fn) {
  g.config_count(limit);
  std::vector<int> y(g.num_vars(), 0);
  for (;;) {
    double s = 0.0;
    for (int r = 0; r < g.num_regions(); ++r)
      s += f.f[r][g.restrict_index(r, y.data())];
    fn(y, s);
    int v = g.num_vars() - 1;
    while (v >= 0 && ++y[v] == g.card()) y[v--] = 0;
    if (v < 0) break;
  }
}

}  // namespace

double brute_force_log_partition(const RegionGraph& g, const PotentialTables& f,
                                 double eps, long long limit) {
  double m = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  enumerate(g, f, limit, [&](const std::vector<int>&, double s) {
    if (eps == 0.0) {
      m = std::max(m, s);
      return;
    }
    double x = s / eps;
    if (x > m) {
      sum = sum * std::exp(m - x) + 1.0;
      m = x;
    } else {
      sum += std::exp(x - m);
    }
  });
  return eps == 0.0 ? m : eps * (m + std::log(sum));
}

BeliefSet brute_force_marginals(const RegionGraph& g, const PotentialTables& f,
                                double eps, long long limit) {
  BeliefSet b(g.num_regions());
  for (int r = 0; r < g.num_regions(); ++r)
    b[r].assign(g.region(r).table_len, 0.0);

  if (eps == 0.0) {
    double best = brute_force_log_partition(g, f, 0.0, limit);
    long long ties = 0;
    enumerate(g, f, limit, [&](const std::vector<int>& y, double s) {
      if (s >= best - kTieTol) {
        ++ties;
        for (int r = 0; r < g.num_regions(); ++r)
          b[r][g.restrict_index(r, y.data())] += 1.0;
      }
    });
    for (auto& t : b)
      for (auto& x : t) x /= static_cast<double>(ties);
    return b;
  }

  double logz = brute_force_log_partition(g, f, eps, limit) / eps;
  enumerate(g, f, limit, [&](const std::vector<int>& y, double s) {
    double p = std::exp(s / eps - logz);
    for (int r = 0; r < g.num_regions(); ++r)
      b[r][g.restrict_index(r, y.data())] += p;
  });
  // guard against tiny enumeration-order drift
  for (auto& t : b) {
    double z = 0.0;
    for (double x : t) z += x;
    for (auto& x : t) x /= z;
  }
  return b;
}

std::vector<int> brute_force_map(const RegionGraph& g, const PotentialTables& f,
                                 long long limit) {
  std::vector<int> best;
  double best_s = -std::numeric_limits<double>::infinity();
  enumerate(g, f, limit, [&](const std::vector<int>& y, double s) {
    if (s > best_s) {
      best_s = s;
      best = y;
    }
  });
  return best;
}

}  // namespace deepstruct
