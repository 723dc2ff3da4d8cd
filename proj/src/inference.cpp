#include "deepstruct/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace deepstruct {

namespace {

constexpr double kTieTol = 1e-12;

double logsumexp(const double* x, int n, double scale) {
  // scale * logsumexp(x / scale), max-subtracted; scale = 0 means max
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  if (scale == 0.0) return m;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp((x[i] - m) / scale);
  return m + scale * std::log(s);
}

}  // namespace

void MessagePlan::build(const RegionGraph& g) {
  edges_.clear();
  int nr = g.num_regions();
  out_edges_.assign(nr, {});
  in_edges_.assign(nr, {});
  for (int r = 0; r < nr; ++r) {
    for (int p : g.region(r).parents) {
      Edge e;
      e.child = r;
      e.parent = p;
      const Region& pr = g.region(p);
      e.restrict_idx.resize(pr.table_len);
      // walk all parent assignments with an odometer over its scope
      std::vector<int> labels(g.num_vars(), 0);
      const auto& ps = pr.scope;
      for (int idx = 0; idx < pr.table_len; ++idx) {
        int rem = idx;
        for (int i = static_cast<int>(ps.size()) - 1; i >= 0; --i) {
          labels[ps[i]] = rem % g.card();
          rem /= g.card();
        }
        e.restrict_idx[idx] = g.restrict_index(r, labels.data());
      }
      int eid = static_cast<int>(edges_.size());
      edges_.push_back(std::move(e));
      out_edges_[r].push_back(eid);
      in_edges_[p].push_back(eid);
    }
  }
}

void sweep(const RegionGraph& g, const MessagePlan& plan, const PotentialTables& f,
           double eps, Messages& m) {
  sweep(g, plan, f, eps, m, {});
}

void sweep(const RegionGraph& g, const MessagePlan& plan, const PotentialTables& f,
           double eps, Messages& m, const std::function<void(int)>& after_block) {
  int max_tab = 0;
  for (int r = 0; r < g.num_regions(); ++r)
    max_tab = std::max(max_tab, g.region(r).table_len);
  std::vector<double> a(max_tab), s(max_tab), mx(max_tab), sum(max_tab);
  std::vector<std::vector<double>> mu;

  for (int r : g.sweep_order()) {
    const Region& reg = g.region(r);
    const auto& pes = plan.out_edges(r);
    if (pes.empty()) continue;
    int len = reg.table_len;

    mu.resize(pes.size());
    double cden = reg.c;
    for (std::size_t pi = 0; pi < pes.size(); ++pi) {
      const auto& e = plan.edges()[pes[pi]];
      const Region& par = g.region(e.parent);
      cden += par.c;

      // a = f_p - outgoing lambda of p + incoming lambda of p's other children
      std::copy(f.f[e.parent].begin(), f.f[e.parent].end(), a.begin());
      for (int oe : plan.out_edges(e.parent))
        for (int y = 0; y < par.table_len; ++y) a[y] -= m.lam[oe][y];
      for (int ie : plan.in_edges(e.parent)) {
        if (ie == pes[pi]) continue;
        const auto& rest = plan.edges()[ie].restrict_idx;
        const auto& lam = m.lam[ie];
        for (int y = 0; y < par.table_len; ++y) a[y] += lam[rest[y]];
      }

      // mu[p->r](y_r): scaled logsumexp (or max) over the preimage of y_r
      double ecp = eps * par.c;
      mu[pi].assign(len, 0.0);
      const auto& rest = e.restrict_idx;
      std::fill(mx.begin(), mx.begin() + len, -std::numeric_limits<double>::infinity());
      for (int y = 0; y < par.table_len; ++y)
        mx[rest[y]] = std::max(mx[rest[y]], a[y]);
      if (ecp == 0.0) {
        for (int yr = 0; yr < len; ++yr) mu[pi][yr] = mx[yr];
      } else {
        std::fill(sum.begin(), sum.begin() + len, 0.0);
        for (int y = 0; y < par.table_len; ++y)
          sum[rest[y]] += std::exp((a[y] - mx[rest[y]]) / ecp);
        for (int yr = 0; yr < len; ++yr)
          mu[pi][yr] = mx[yr] + ecp * std::log(sum[yr]);
      }
    }

    // s = f_r + incoming child multipliers + all mu
    std::copy(f.f[r].begin(), f.f[r].end(), s.begin());
    for (int ie : plan.in_edges(r)) {
      const auto& rest = plan.edges()[ie].restrict_idx;
      const auto& lam = m.lam[ie];
      for (int y = 0; y < len; ++y) s[y] += lam[rest[y]];
    }
    for (std::size_t pi = 0; pi < pes.size(); ++pi)
      for (int y = 0; y < len; ++y) s[y] += mu[pi][y];

    for (std::size_t pi = 0; pi < pes.size(); ++pi) {
      const auto& e = plan.edges()[pes[pi]];
      double ct = g.region(e.parent).c / cden;
      auto& lam = m.lam[pes[pi]];
      double mean = 0.0;
      for (int y = 0; y < len; ++y) {
        lam[y] = ct * s[y] - mu[pi][y];
        mean += lam[y];
      }
      mean /= len;
      for (int y = 0; y < len; ++y) lam[y] -= mean;
    }
    if (after_block) after_block(r);
  }
}

void reparameterized_scores(const RegionGraph& g, const MessagePlan& plan,
                            const PotentialTables& f, const Messages& m, int r,
                            double* out) {
  const Region& reg = g.region(r);
  std::copy(f.f[r].begin(), f.f[r].end(), out);
  for (int ie : plan.in_edges(r)) {
    const auto& rest = plan.edges()[ie].restrict_idx;
    const auto& lam = m.lam[ie];
    for (int y = 0; y < reg.table_len; ++y) out[y] += lam[rest[y]];
  }
  for (int oe : plan.out_edges(r)) {
    const auto& lam = m.lam[oe];
    for (int y = 0; y < reg.table_len; ++y) out[y] -= lam[y];
  }
}

double dual_objective(const RegionGraph& g, const MessagePlan& plan,
                      const PotentialTables& f, double eps, const Messages& m) {
  int max_tab = 0;
  for (int r = 0; r < g.num_regions(); ++r)
    max_tab = std::max(max_tab, g.region(r).table_len);
  std::vector<double> fhat(max_tab);
  double total = 0.0;
  for (int r = 0; r < g.num_regions(); ++r) {
    const Region& reg = g.region(r);
    reparameterized_scores(g, plan, f, m, r, fhat.data());
    total += logsumexp(fhat.data(), reg.table_len, eps * reg.c);
  }
  return total;
}

void beliefs_region(const RegionGraph& g, const MessagePlan& plan,
                    const PotentialTables& f, double eps, const Messages& m, int r,
                    double* out) {
  const Region& reg = g.region(r);
  int len = reg.table_len;
  reparameterized_scores(g, plan, f, m, r, out);
  double ecr = eps * reg.c;
  double mx = out[0];
  for (int y = 1; y < len; ++y) mx = std::max(mx, out[y]);
  if (ecr == 0.0) {
    int ties = 0;
    for (int y = 0; y < len; ++y)
      if (out[y] >= mx - kTieTol) ++ties;
    for (int y = 0; y < len; ++y)
      out[y] = out[y] >= mx - kTieTol ? 1.0 / ties : 0.0;
    return;
  }
  double z = 0.0;
  for (int y = 0; y < len; ++y) {
    out[y] = std::exp((out[y] - mx) / ecr);
    z += out[y];
  }
  for (int y = 0; y < len; ++y) out[y] /= z;
}

BeliefSet beliefs_from_messages(const RegionGraph& g, const MessagePlan& plan,
                                const PotentialTables& f, double eps,
                                const Messages& m) {
  BeliefSet b(g.num_regions());
  for (int r = 0; r < g.num_regions(); ++r) {
    b[r].resize(g.region(r).table_len);
    beliefs_region(g, plan, f, eps, m, r, b[r].data());
  }
  return b;
}

std::vector<int> map_decode(const RegionGraph& g, const MessagePlan& plan,
                            const PotentialTables& f, double eps, const Messages& m) {
  std::vector<int> y(g.num_vars(), 0);
  std::vector<double> b;
  for (int v = 0; v < g.num_vars(); ++v) {
    int best_r = g.unary_region(v);
    if (best_r < 0) {
      // fall back to the smallest region containing v
      std::size_t best_size = std::numeric_limits<std::size_t>::max();
      for (int r = 0; r < g.num_regions(); ++r) {
        const auto& sc = g.region(r).scope;
        if (std::find(sc.begin(), sc.end(), v) != sc.end() && sc.size() < best_size) {
          best_size = sc.size();
          best_r = r;
        }
      }
      if (best_r < 0) continue;
    }
    const Region& reg = g.region(best_r);
    b.resize(reg.table_len);
    beliefs_region(g, plan, f, eps, m, best_r, b.data());
    int best_idx = 0;
    for (int i = 1; i < reg.table_len; ++i)
      if (b[i] > b[best_idx]) best_idx = i;
    // recover v's label from the flat assignment index (big-endian scope)
    int rem = best_idx;
    for (int i = static_cast<int>(reg.scope.size()) - 1; i >= 0; --i) {
      int lab = rem % g.card();
      rem /= g.card();
      if (reg.scope[i] == v) y[v] = lab;
    }
  }
  return y;
}

std::pair<double, int> run_to_convergence(const RegionGraph& g, const MessagePlan& plan,
                                          const PotentialTables& f, double eps,
                                          Messages& m, double tol, int max_sweeps) {
  double prev = dual_objective(g, plan, f, eps, m);
  for (int it = 1; it <= max_sweeps; ++it) {
    sweep(g, plan, f, eps, m);
    double cur = dual_objective(g, plan, f, eps, m);
    if (std::abs(prev - cur) < tol) return {cur, it};
    prev = cur;
  }
  return {prev, max_sweeps};
}

}  // namespace deepstruct
