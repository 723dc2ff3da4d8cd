#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "deepstruct/region.hpp"

namespace deepstruct {

// Static message-passing layout for one region graph: the (child, parent)
// edge list plus, per edge, the precomputed restriction table mapping a parent
// assignment index to the child assignment index it restricts to. Shared by
// all samples; per-sample state lives in Messages.
class MessagePlan {
 public:
  struct Edge {
    int child = -1;
    int parent = -1;
    std::vector<int> restrict_idx;  // parent assignment -> child assignment
  };

  MessagePlan() = default;
  explicit MessagePlan(const RegionGraph& g) { build(g); }
  void build(const RegionGraph& g);

  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& out_edges(int r) const { return out_edges_[r]; }  // r as child
  const std::vector<int>& in_edges(int r) const { return in_edges_[r]; }    // r as parent

 private:
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> out_edges_;
  std::vector<std::vector<int>> in_edges_;
};

// Lagrange multipliers lambda[e] for every child->parent edge, indexed by the
// child's assignments. Zero-initialized; warm-started across weight updates
// by the blended trainer.
struct Messages {
  std::vector<std::vector<double>> lam;

  void init(const RegionGraph& g, const MessagePlan& plan) {
    lam.resize(plan.edges().size());
    for (std::size_t e = 0; e < lam.size(); ++e)
      lam[e].assign(g.region(plan.edges()[e].child).table_len, 0.0);
  }
  void reset() {
    for (auto& v : lam) std::fill(v.begin(), v.end(), 0.0);
  }
};

using BeliefSet = std::vector<std::vector<double>>;

// One full sweep of block-coordinate dual descent: visits every region that
// has parents (scope size ascending, then lexicographic) and jointly replaces
// all its outgoing multipliers with the closed-form block minimizer:
//   mu[p->r](y_r)   = eps*c_p * logsumexp over parent assignments extending y_r
//                     of (f_p - sum outgoing lambda of p + sum other incoming
//                     lambda of p) / (eps*c_p)       (max when eps*c_p = 0)
//   lambda[r->p](y_r) = ct_{r,p} * (f_r + sum incoming lambda + sum mu) - mu[p->r]
// with ct_{r,p} = c_p / (c_r + sum of parent counting numbers), followed by
// mean-centering of each vector (a dual-invariant shift that keeps messages
// bounded).
void sweep(const RegionGraph& g, const MessagePlan& plan, const PotentialTables& f,
           double eps, Messages& m);
// Same, invoking after_block(region) once each block minimization finishes, so
// callers can watch the dual at block granularity.
void sweep(const RegionGraph& g, const MessagePlan& plan, const PotentialTables& f,
           double eps, Messages& m, const std::function<void(int)>& after_block);

// Reparameterized score of region r: f_r plus incoming child multipliers minus
// outgoing parent multipliers. out must hold table_len(r) entries.
void reparameterized_scores(const RegionGraph& g, const MessagePlan& plan,
                            const PotentialTables& f, const Messages& m, int r,
                            double* out);

// sum_r eps*c_r*logsumexp(fhat_r / (eps*c_r)); terms with eps*c_r = 0
// degenerate to max over fhat_r.
double dual_objective(const RegionGraph& g, const MessagePlan& plan,
                      const PotentialTables& f, double eps, const Messages& m);

// b_r proportional to exp(fhat_r / (eps*c_r)); for eps*c_r = 0, uniform over
// the maximizers of fhat_r (absolute tie tolerance 1e-12).
void beliefs_region(const RegionGraph& g, const MessagePlan& plan,
                    const PotentialTables& f, double eps, const Messages& m, int r,
                    double* out);
BeliefSet beliefs_from_messages(const RegionGraph& g, const MessagePlan& plan,
                                const PotentialTables& f, double eps,
                                const Messages& m);

// Per-variable argmax of the smallest region's beliefs containing it (ties ->
// lowest label index). Exact MAP on trees at eps=0 convergence.
std::vector<int> map_decode(const RegionGraph& g, const MessagePlan& plan,
                            const PotentialTables& f, double eps, const Messages& m);

// Sweeps until the dual changes by less than tol (absolute) or max_sweeps is
// hit; returns {final dual, sweeps used}.
std::pair<double, int> run_to_convergence(const RegionGraph& g, const MessagePlan& plan,
                                          const PotentialTables& f, double eps,
                                          Messages& m, double tol = 1e-10,
                                          int max_sweeps = 1000);

}  // namespace deepstruct
