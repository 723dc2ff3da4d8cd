#include "deepstruct/region.hpp"

#include <algorithm>
#include <cmath>

namespace deepstruct {

namespace {

bool strict_subset(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() >= b.size()) return false;
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

int RegionGraph::add_region(std::vector<int> scope, double c, RegionClass cls) {
  if (finalized_) throw ValidationError("region graph already finalized");
  std::sort(scope.begin(), scope.end());
  Region reg;
  reg.scope = std::move(scope);
  reg.c = c;
  reg.cls = cls;
  int len = 1;
  for (std::size_t i = 0; i < reg.scope.size(); ++i) len *= card_;
  reg.table_len = len;
  regions_.push_back(std::move(reg));
  return static_cast<int>(regions_.size()) - 1;
}

void RegionGraph::finalize() {
  int nr = num_regions();
  // parents = minimal strict supersets (Hasse edges)
  for (int r = 0; r < nr; ++r) {
    for (int p = 0; p < nr; ++p) {
      if (!strict_subset(regions_[r].scope, regions_[p].scope)) continue;
      bool minimal = true;
      for (int q = 0; q < nr && minimal; ++q)
        if (q != r && q != p && strict_subset(regions_[r].scope, regions_[q].scope) &&
            strict_subset(regions_[q].scope, regions_[p].scope))
          minimal = false;
      if (minimal) {
        regions_[r].parents.push_back(p);
        regions_[p].children.push_back(r);
      }
    }
  }
  // deterministic sweep order: scope size ascending, then lexicographic scope
  sweep_order_.resize(nr);
  for (int r = 0; r < nr; ++r) sweep_order_[r] = r;
  std::sort(sweep_order_.begin(), sweep_order_.end(), [this](int a, int b) {
    const auto& sa = regions_[a].scope;
    const auto& sb = regions_[b].scope;
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    return sa < sb;
  });
  unary_of_.assign(num_vars_, -1);
  for (int r = 0; r < nr; ++r)
    if (regions_[r].scope.size() == 1) unary_of_[regions_[r].scope[0]] = r;
  finalized_ = true;
}

int RegionGraph::restrict_index(int r, const int* labels) const {
  const Region& reg = regions_[r];
  int idx = 0;
  for (int v : reg.scope) idx = idx * card_ + labels[v];
  return idx;
}

long long RegionGraph::config_count(long long limit) const {
  long long n = 1;
  for (int i = 0; i < num_vars_; ++i) {
    n *= card_;
    if (limit > 0 && n > limit)
      throw ValidationError("state space exceeds enumeration limit");
  }
  return n;
}

std::vector<std::string> RegionGraph::validate(double epsilon) const {
  std::vector<std::string> out;
  if (num_vars_ < 1) out.push_back("graph has no variables");
  if (card_ < 1) out.push_back("cardinality must be at least 1");
  for (int r = 0; r < num_regions(); ++r) {
    const Region& reg = regions_[r];
    if (reg.scope.empty()) out.push_back("region " + std::to_string(r) + ": empty scope");
    for (std::size_t i = 0; i < reg.scope.size(); ++i) {
      if (reg.scope[i] < 0 || reg.scope[i] >= num_vars_)
        out.push_back("region " + std::to_string(r) + ": variable out of range");
      if (i > 0 && reg.scope[i] == reg.scope[i - 1])
        out.push_back("region " + std::to_string(r) + ": repeated variable");
    }
    if (epsilon * reg.c < 0.0)
      out.push_back("region " + std::to_string(r) + ": negative weighted entropy");
    for (int p : reg.parents) {
      const Region& par = regions_[p];
      if (!strict_subset(reg.scope, par.scope))
        out.push_back("regions " + std::to_string(r) + "," + std::to_string(p) +
                      ": non-strict containment");
      if (std::find(par.children.begin(), par.children.end(), r) == par.children.end())
        out.push_back("regions " + std::to_string(r) + "," + std::to_string(p) +
                      ": parent/child lists inconsistent");
    }
  }
  for (int a = 0; a < num_regions(); ++a)
    for (int b = a + 1; b < num_regions(); ++b)
      if (regions_[a].scope == regions_[b].scope)
        out.push_back("regions " + std::to_string(a) + "," + std::to_string(b) +
                      ": duplicate scope");
  return out;
}

RegionGraph build_chain_model(int n, int k, int order, double c_unary,
                              double c_pair1, double c_pair2) {
  if (n < 2) throw ValidationError("chain needs at least 2 variables");
  if (k < 2) throw ValidationError("chain needs cardinality at least 2");
  if (order != 1 && order != 2) throw ValidationError("order must be 1 or 2");
  if (order == 2 && n < 3) throw ValidationError("order 2 needs at least 3 variables");
  RegionGraph g(n, k);
  for (int i = 0; i < n; ++i) g.add_region({i}, c_unary, RegionClass::Unary);
  for (int i = 0; i + 1 < n; ++i) g.add_region({i, i + 1}, c_pair1, RegionClass::Pair1);
  if (order == 2)
    for (int i = 0; i + 2 < n; ++i) g.add_region({i, i + 2}, c_pair2, RegionClass::Pair2);
  g.finalize();
  return g;
}

double score_configuration(const RegionGraph& g, const PotentialTables& t,
                           const std::vector<int>& y) {
  if (static_cast<int>(y.size()) != g.num_vars())
    throw ValidationError("assignment length does not match variable count");
  for (int v : y)
    if (v < 0 || v >= g.card()) throw ValidationError("label out of range");
  double s = 0.0;
  for (int r = 0; r < g.num_regions(); ++r)
    s += t.f[r][g.restrict_index(r, y.data())];
  return s;
}

void loss_augment(const RegionGraph& g, PotentialTables& t,
                  const std::vector<int>& y_truth, double weight) {
  if (weight == 0.0) return;
  for (int r = 0; r < g.num_regions(); ++r) {
    const Region& reg = g.region(r);
    if (reg.scope.size() != 1) continue;
    int truth = y_truth[reg.scope[0]];
    for (int y = 0; y < g.card(); ++y)
      if (y != truth) t.f[r][y] += weight;
  }
}

}  // namespace deepstruct
