#pragma once

#include <string>
#include <vector>

#include "deepstruct/errors.hpp"

namespace deepstruct {

// Classes bind regions to their potential source in the model: a shared unary
// network per variable slot, or one shared table per pairwise distance class.
enum class RegionClass { Unary, Pair1, Pair2, Free };

struct Region {
  std::vector<int> scope;          // sorted variable ids
  double c = 1.0;                  // counting number
  RegionClass cls = RegionClass::Free;
  std::vector<int> parents;        // minimal strict supersets
  std::vector<int> children;       // inverse of parents
  int table_len = 0;               // prod of scope cardinalities
};

// Region graph over N variables with one shared cardinality K. Assignments of
// a scope are flat-indexed big-endian: the first (lowest) variable is most
// significant. Immutable once finalized.
class RegionGraph {
 public:
  RegionGraph() = default;
  RegionGraph(int num_vars, int card) : num_vars_(num_vars), card_(card) {}

  int num_vars() const { return num_vars_; }
  int card() const { return card_; }
  int num_regions() const { return static_cast<int>(regions_.size()); }
  const Region& region(int r) const { return regions_[r]; }
  const std::vector<int>& sweep_order() const { return sweep_order_; }
  int unary_region(int var) const { return unary_of_[var]; }

  int add_region(std::vector<int> scope, double c, RegionClass cls);
  void finalize();  // derive parent/child links and the sweep order

  // flat index of a full assignment restricted to region r's scope
  int restrict_index(int r, const int* labels) const;

  // total configuration count, overflow-checked against limit (0 = unchecked)
  long long config_count(long long limit) const;

  // collected invariant violations; empty means ok
  std::vector<std::string> validate(double epsilon = 1.0) const;

 private:
  int num_vars_ = 0;
  int card_ = 0;
  std::vector<Region> regions_;
  std::vector<int> sweep_order_;
  std::vector<int> unary_of_;
  bool finalized_ = false;
};

// Chain over N variables: unary regions plus distance-1 pairs, and for
// order 2 also distance-2 pairs. All counting numbers start at 1 and can be
// overridden per class.
RegionGraph build_chain_model(int n, int k, int order, double c_unary = 1.0,
                              double c_pair1 = 1.0, double c_pair2 = 1.0);

// Per-sample dense score tables, one per region, indexed like the region's
// assignments.
struct PotentialTables {
  std::vector<std::vector<double>> f;

  void resize_for(const RegionGraph& g) {
    f.resize(g.num_regions());
    for (int r = 0; r < g.num_regions(); ++r)
      f[r].assign(g.region(r).table_len, 0.0);
  }
  void zero() {
    for (auto& t : f) std::fill(t.begin(), t.end(), 0.0);
  }
};

double score_configuration(const RegionGraph& g, const PotentialTables& t,
                           const std::vector<int>& y);

// Adds weight * [label differs from truth] to every unary table entry;
// a per-variable Hamming margin. Pairwise tables are untouched.
void loss_augment(const RegionGraph& g, PotentialTables& t,
                  const std::vector<int>& y_truth, double weight);

}  // namespace deepstruct
