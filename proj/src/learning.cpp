#include "deepstruct/learning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace deepstruct {

namespace {

constexpr int kChunk = 16;       // fixed batch chunking; part of the determinism contract
constexpr int kEvalSweeps = 20;  // decode sweeps at temperature 0

// Per-thread scratch: one activation copy of the shared unary net per word
// slot (all slots must stay live for backward), plus table and belief buffers.
struct Worker {
  std::vector<ComputeGraph> nets;
  PotentialTables tables;
  Messages msg;                            // evaluate() scratch only
  std::vector<int> labels;
  std::vector<std::vector<double>> seeds;  // per slot, length K
  std::vector<double> belief;
};

std::vector<Worker> make_workers(const Model& m, const RegionGraph& g,
                                 const MessagePlan& plan, int count) {
  std::vector<Worker> ws(count);
  int L = g.num_vars(), K = g.card();
  for (auto& w : ws) {
    w.nets.assign(L, m.unary);
    w.tables.resize_for(g);
    w.msg.init(g, plan);
    w.labels.resize(L);
    w.seeds.assign(L, std::vector<double>(K, 0.0));
  }
  return ws;
}

void check_compatible(const Model& m, const RegionGraph& g, const Dataset& data) {
  if (data.word_length != g.num_vars())
    throw ValidationError("dataset word length " + std::to_string(data.word_length) +
                          " does not match the " + std::to_string(g.num_vars()) +
                          "-variable graph");
  if (data.slot_pixels() != m.netspec.input_dim)
    throw ValidationError("dataset slot size " + std::to_string(data.slot_pixels()) +
                          " does not match network input " +
                          std::to_string(m.netspec.input_dim));
}

void fill_tables(const Model& m, const RegionGraph& g, const Dataset::Sample& s,
                 int slot_pixels, const std::vector<double>* p1,
                 const std::vector<double>* p2, Worker& w) {
  for (int v = 0; v < g.num_vars(); ++v) {
    ComputeGraph& net = w.nets[v];
    net.set_input(m.unary_in, s.image.data() + std::size_t(v) * slot_pixels, slot_pixels);
    net.forward(m.params);
    const Tensor& sc = net.value(m.unary_out);
    std::copy(sc.v.begin(), sc.v.end(), w.tables.f[g.unary_region(v)].begin());
  }
  for (int r = 0; r < g.num_regions(); ++r) {
    const Region& reg = g.region(r);
    if (reg.cls == RegionClass::Pair1 && p1)
      std::copy(p1->begin(), p1->end(), w.tables.f[r].begin());
    else if (reg.cls == RegionClass::Pair2 && p2)
      std::copy(p2->begin(), p2->end(), w.tables.f[r].begin());
  }
}

bool graph_has(const RegionGraph& g, RegionClass cls) {
  for (int r = 0; r < g.num_regions(); ++r)
    if (g.region(r).cls == cls) return true;
  return false;
}

double target_score(const RegionGraph& g, const PotentialTables& t,
                    const std::vector<std::vector<double>>* target,
                    const std::vector<int>& labels) {
  if (!target) return score_configuration(g, t, labels);
  double s = 0.0;
  for (int r = 0; r < g.num_regions(); ++r) {
    const auto& d = (*target)[r];
    for (std::size_t j = 0; j < d.size(); ++j) s += d[j] * t.f[r][j];
  }
  return s;
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t j = 0; j < dst.v.size(); ++j) dst.v[j] += src.v[j];
}

void write_log_row(std::ostream& os, const TrainLogRow& r) {
  char buf[160];
  if (r.val_char >= 0)
    std::snprintf(buf, sizeof buf, "%d,%.3f,%.9g,%.9g,%.4f,%.4f\n", r.iteration,
                  r.elapsed_ms, r.objective, r.step_size, r.val_char, r.val_word);
  else
    std::snprintf(buf, sizeof buf, "%d,%.3f,%.9g,%.9g,,\n", r.iteration, r.elapsed_ms,
                  r.objective, r.step_size);
  os << buf;
  os.flush();
}

}  // namespace

PotentialTables forward_potentials(const Model& m, const RegionGraph& g,
                                   const Dataset::Sample& s) {
  Worker w;
  w.nets.assign(g.num_vars(), m.unary);
  w.tables.resize_for(g);
  std::vector<double> p1, p2;
  if (m.has_pair1 && graph_has(g, RegionClass::Pair1)) p1 = pairwise_table(m, m.pair1);
  if (m.has_pair2 && graph_has(g, RegionClass::Pair2)) p2 = pairwise_table(m, m.pair2);
  fill_tables(m, g, s, m.netspec.input_dim, p1.empty() ? nullptr : &p1,
              p2.empty() ? nullptr : &p2, w);
  return std::move(w.tables);
}

double objective_value(const Model& model, const RegionGraph& g, const MessagePlan& plan,
                       const Dataset& data, const std::vector<int>& idx,
                       const std::vector<Messages>& msgs, double eps,
                       double loss_weight) {
  check_compatible(model, g, data);
  double total = 0.0;
  std::vector<int> labels(g.num_vars());
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const auto& s = data.samples[idx[t]];
    PotentialTables tab = forward_potentials(model, g, s);
    for (int v = 0; v < g.num_vars(); ++v) labels[v] = s.labels[v];
    if (loss_weight > 0) loss_augment(g, tab, labels, loss_weight);
    total += dual_objective(g, plan, tab, eps, msgs[t]) -
             score_configuration(g, tab, labels);
  }
  return total;
}

EvalMetrics evaluate(const Model& model, const Dataset& data, ExecMode mode,
                     const RegionGraph* graph, const MessagePlan* plan) {
  const RegionGraph& g = graph ? *graph : model.graph;
  const MessagePlan& pl = plan ? *plan : model.plan;
  check_compatible(model, g, data);
  int n = static_cast<int>(data.samples.size());
  if (n == 0) return {};
  int L = g.num_vars();

  std::vector<double> p1, p2;
  if (model.has_pair1 && graph_has(g, RegionClass::Pair1))
    p1 = pairwise_table(model, model.pair1);
  if (model.has_pair2 && graph_has(g, RegionClass::Pair2))
    p2 = pairwise_table(model, model.pair2);

  auto ws = make_workers(model, g, pl, worker_count(mode));
  int nc = chunk_count(n, kChunk);
  std::vector<long long> cchar(nc, 0), cword(nc, 0);

  for_chunks(n, kChunk, mode, [&](int c, int b, int e) {
    Worker& w = ws[this_worker()];
    for (int i = b; i < e; ++i) {
      const auto& s = data.samples[i];
      fill_tables(model, g, s, data.slot_pixels(), p1.empty() ? nullptr : &p1,
                  p2.empty() ? nullptr : &p2, w);
      w.msg.reset();
      for (int k = 0; k < kEvalSweeps; ++k) sweep(g, pl, w.tables, 0.0, w.msg);
      std::vector<int> y = map_decode(g, pl, w.tables, 0.0, w.msg);
      int hits = 0;
      for (int v = 0; v < L; ++v) hits += y[v] == s.labels[v];
      cchar[c] += hits;
      cword[c] += hits == L;
    }
  });

  long long chars = 0, words = 0;
  for (int c = 0; c < nc; ++c) {
    chars += cchar[c];
    words += cword[c];
  }
  return {100.0 * double(chars) / (double(n) * L), 100.0 * double(words) / n};
}

TrainResult train(Model& model, const Dataset& data, const Dataset* val,
                  const TrainConfig& cfg, const TrainOptions& opt, ExecMode mode,
                  std::ostream* log_stream) {
  const RegionGraph& g = opt.graph ? *opt.graph : model.graph;
  const MessagePlan& pl = opt.plan ? *opt.plan : model.plan;
  check_compatible(model, g, data);
  ParamStore& ps = model.params;
  int P = static_cast<int>(ps.names.size());
  int n = static_cast<int>(data.samples.size());
  if (n == 0) throw ValidationError("empty training set");
  int L = g.num_vars(), K = g.card();

  int iters = opt.max_iterations >= 0 ? opt.max_iterations : cfg.max_iterations;
  double step = opt.step_size > 0 ? opt.step_size : cfg.step_size;
  int batch = std::min(cfg.batch_size, n);
  bool blended = cfg.algo == TrainConfig::Algo::Blended;
  int sweeps_per = blended ? 1 : cfg.sweeps;

  std::vector<char> frozen(P, 0);
  if (!opt.frozen.empty())
    for (int p = 0; p < P; ++p) frozen[p] = opt.frozen[p];
  bool unary_live = false;
  for (int p = 0; p < model.first_pair_param; ++p) unary_live |= !frozen[p];
  bool pair_live = false;
  for (int p = model.first_pair_param; p < P; ++p) pair_live |= !frozen[p];

  bool use_p1 = model.has_pair1 && graph_has(g, RegionClass::Pair1);
  bool use_p2 = model.has_pair2 && graph_has(g, RegionClass::Pair2);

  std::vector<Messages> msgs(n);
  for (auto& m : msgs) m.init(g, pl);

  auto ws = make_workers(model, g, pl, worker_count(mode));

  ps.zero_grad();
  int ncmax = chunk_count(batch, kChunk);
  std::vector<std::vector<Tensor>> cgrads(ncmax, ps.grad);
  std::vector<std::vector<double>> cg1(ncmax), cg2(ncmax);
  std::vector<double> cobj(ncmax, 0.0);
  if (use_p1)
    for (auto& v : cg1) v.assign(std::size_t(K) * K, 0.0);
  if (use_p2)
    for (auto& v : cg2) v.assign(std::size_t(K) * K, 0.0);
  ComputeGraph p1net, p2net;
  if (use_p1 && !model.pair1.linear) p1net = model.pair1.net;
  if (use_p2 && !model.pair2.linear) p2net = model.pair2.net;

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  int pos = n, epoch = 0;

  TrainResult res;
  res.log.reserve(iters);
  double best = -1.0;
  auto t0 = std::chrono::steady_clock::now();

  for (int it = 1; it <= iters; ++it) {
    if (pos >= n) {
      Rng rs(Rng::derive(cfg.seed, 500 + epoch));
      for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(rs.uniform_int(i + 1));
        std::swap(perm[i], perm[j]);
      }
      pos = 0;
      ++epoch;
    }
    int take = std::min(batch, n - pos);
    const int* bidx = perm.data() + pos;
    pos += take;

    std::vector<double> p1tab, p2tab;
    if (use_p1) p1tab = pairwise_table(model, model.pair1);
    if (use_p2) p2tab = pairwise_table(model, model.pair2);

    int nc = chunk_count(take, kChunk);
    for (int c = 0; c < nc; ++c) {
      cobj[c] = 0.0;
      if (unary_live)
        for (auto& t : cgrads[c]) t.zero();
      if (use_p1 && pair_live) std::fill(cg1[c].begin(), cg1[c].end(), 0.0);
      if (use_p2 && pair_live) std::fill(cg2[c].begin(), cg2[c].end(), 0.0);
    }

    for_chunks(take, kChunk, mode, [&](int c, int bb, int ee) {
      Worker& w = ws[this_worker()];
      for (int t = bb; t < ee; ++t) {
        int i = bidx[t];
        const auto& s = data.samples[i];
        for (int v = 0; v < L; ++v) w.labels[v] = s.labels[v];
        fill_tables(model, g, s, data.slot_pixels(), use_p1 ? &p1tab : nullptr,
                    use_p2 ? &p2tab : nullptr, w);
        if (cfg.loss_weight > 0) loss_augment(g, w.tables, w.labels, cfg.loss_weight);

        Messages& m = msgs[i];
        if (!blended) m.reset();
        for (int k = 0; k < sweeps_per; ++k) sweep(g, pl, w.tables, cfg.epsilon, m);

        const std::vector<std::vector<double>>* target =
            opt.targets ? &(*opt.targets)[i] : nullptr;
        cobj[c] += dual_objective(g, pl, w.tables, cfg.epsilon, m) -
                   target_score(g, w.tables, target, w.labels);

        for (int r = 0; r < g.num_regions(); ++r) {
          const Region& reg = g.region(r);
          bool pair = reg.cls == RegionClass::Pair1 || reg.cls == RegionClass::Pair2;
          if (pair && !pair_live) continue;
          if (!pair && !unary_live) continue;
          w.belief.resize(reg.table_len);
          beliefs_region(g, pl, w.tables, cfg.epsilon, m, r, w.belief.data());
          if (target) {
            const auto& d = (*target)[r];
            for (int j = 0; j < reg.table_len; ++j) w.belief[j] -= d[j];
          } else {
            w.belief[g.restrict_index(r, w.labels.data())] -= 1.0;
          }
          if (reg.cls == RegionClass::Pair1) {
            for (int j = 0; j < reg.table_len; ++j) cg1[c][j] += w.belief[j];
          } else if (reg.cls == RegionClass::Pair2) {
            for (int j = 0; j < reg.table_len; ++j) cg2[c][j] += w.belief[j];
          } else {
            std::copy(w.belief.begin(), w.belief.end(), w.seeds[reg.scope[0]].begin());
          }
        }
        if (unary_live)
          for (int v = 0; v < L; ++v)
            w.nets[v].backward(ps, cgrads[c], model.unary_out, w.seeds[v].data());
      }
    });

    ps.zero_grad();
    double obj = 0.0;
    std::vector<double> g1sum, g2sum;
    if (use_p1 && pair_live) g1sum.assign(std::size_t(K) * K, 0.0);
    if (use_p2 && pair_live) g2sum.assign(std::size_t(K) * K, 0.0);
    for (int c = 0; c < nc; ++c) {
      obj += cobj[c];
      if (unary_live)
        for (int p = 0; p < P; ++p) add_into(ps.grad[p], cgrads[c][p]);
      if (!g1sum.empty())
        for (std::size_t j = 0; j < g1sum.size(); ++j) g1sum[j] += cg1[c][j];
      if (!g2sum.empty())
        for (std::size_t j = 0; j < g2sum.size(); ++j) g2sum[j] += cg2[c][j];
    }
    if (!g1sum.empty()) {
      if (model.pair1.linear) {
        Tensor& gt = ps.grad[model.pair1.table_param];
        for (std::size_t j = 0; j < g1sum.size(); ++j) gt.v[j] += g1sum[j];
      } else {
        p1net.forward(ps);
        p1net.backward(ps, model.pair1.out_node, g1sum.data());
      }
    }
    if (!g2sum.empty()) {
      if (model.pair2.linear) {
        Tensor& gt = ps.grad[model.pair2.table_param];
        for (std::size_t j = 0; j < g2sum.size(); ++j) gt.v[j] += g2sum[j];
      } else {
        p2net.forward(ps);
        p2net.backward(ps, model.pair2.out_node, g2sum.data());
      }
    }

    if (!std::isfinite(obj))
      throw std::runtime_error("training aborted: non-finite objective at iteration " +
                               std::to_string(opt.iter_offset + it));

    double wsum = 0.0;
    for (int p = 0; p < P; ++p) {
      if (frozen[p]) continue;
      auto& vel = ps.vel[p].v;
      auto& grd = ps.grad[p].v;
      auto& wal = ps.value[p].v;
      for (std::size_t j = 0; j < vel.size(); ++j) {
        vel[j] = cfg.momentum * vel[j] + grd[j];
        wal[j] -= step * vel[j];
        wsum += wal[j];
      }
    }
    if (!std::isfinite(wsum))
      throw std::runtime_error("training aborted: non-finite parameters at iteration " +
                               std::to_string(opt.iter_offset + it));

    double elapsed =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count() +
        opt.elapsed_offset_ms;
    TrainLogRow row{opt.iter_offset + it, elapsed, obj, step, -1.0, -1.0};

    if (val && cfg.val_interval > 0 &&
        (it % cfg.val_interval == 0 || it == iters)) {
      EvalMetrics em = evaluate(model, *val, mode, &g, &pl);
      row.val_char = em.char_acc;
      row.val_word = em.word_acc;
      if (em.char_acc < best) step *= cfg.step_decay;
      if (em.char_acc > best) best = em.char_acc;
      if (opt.on_validate) opt.on_validate();
    }

    res.log.push_back(row);
    res.final_objective = obj;
    if (log_stream) write_log_row(*log_stream, row);
  }
  res.best_val_char = best;
  res.iterations = iters;
  return res;
}

TrainResult run_strategy(Model& model, const Dataset& data, const Dataset* val,
                         ExecMode mode, std::ostream* log_stream,
                         const std::function<void()>& checkpoint) {
  const TrainConfig& cfg = model.doc.train;
  ParamStore& ps = model.params;
  int P = static_cast<int>(ps.names.size());

  auto freeze_range = [&](int lo, int hi) {
    std::vector<bool> f(P, false);
    for (int p = lo; p < hi && p < P; ++p) f[p] = true;
    return f;
  };
  auto reset_velocity = [&] {
    for (auto& v : ps.vel) v.zero();
  };

  RegionGraph unary_graph = strip_to_unary(model.graph);
  MessagePlan unary_plan(unary_graph);

  TrainOptions opt;
  opt.on_validate = checkpoint;

  using S = TrainConfig::Strategy;
  switch (cfg.strategy) {
    case S::UnaryOnly: {
      for (int p = model.first_pair_param; p < P; ++p) {
        ps.value[p].zero();
        ps.vel[p].zero();
      }
      opt.graph = &unary_graph;
      opt.plan = &unary_plan;
      opt.frozen = freeze_range(model.first_pair_param, P);
      return train(model, data, val, cfg, opt, mode, log_stream);
    }
    case S::Joint:
      return train(model, data, val, cfg, opt, mode, log_stream);
    case S::PwTrain:
    case S::PretrainJoint: {
      opt.graph = &unary_graph;
      opt.plan = &unary_plan;
      opt.frozen = freeze_range(model.first_pair_param, P);
      opt.max_iterations = cfg.pretrain_iterations;
      TrainResult phase1 = train(model, data, val, cfg, opt, mode, log_stream);

      reset_velocity();
      TrainOptions opt2;
      opt2.on_validate = checkpoint;
      opt2.iter_offset = phase1.iterations;
      opt2.elapsed_offset_ms = phase1.log.empty() ? 0.0 : phase1.log.back().elapsed_ms;
      if (cfg.strategy == S::PwTrain)
        opt2.frozen = freeze_range(0, model.first_pair_param);
      else
        opt2.step_size = cfg.joint_step_size;
      TrainResult phase2 = train(model, data, val, cfg, opt2, mode, log_stream);

      TrainResult out;
      out.log = std::move(phase1.log);
      out.log.insert(out.log.end(), phase2.log.begin(), phase2.log.end());
      out.final_objective = phase2.final_objective;
      out.best_val_char = std::max(phase1.best_val_char, phase2.best_val_char);
      out.iterations = phase1.iterations + phase2.iterations;
      return out;
    }
  }
  throw ValidationError("unknown strategy");
}

GradCheckReport gradient_check(const ConfigDoc& doc, int samples, double h,
                               std::uint64_t seed) {
  Model model = build_model(doc);
  model.params.init_params(Rng::derive(seed, 1));
  ParamStore& ps = model.params;
  const RegionGraph& g = model.graph;
  const MessagePlan& pl = model.plan;
  int L = g.num_vars(), K = g.card(), D = model.netspec.input_dim;
  double eps = doc.train.epsilon;
  double lw = doc.train.loss_weight;

  Dataset data;
  data.word_length = L;
  data.height = 1;
  data.width = D;
  for (int i = 0; i < samples; ++i) {
    Rng rng(Rng::derive(seed, 7 + i));
    Dataset::Sample s;
    s.labels.resize(L);
    for (int v = 0; v < L; ++v) s.labels[v] = static_cast<unsigned char>(rng.uniform_int(K));
    s.image.resize(std::size_t(L) * D);
    for (auto& x : s.image) x = static_cast<float>(rng.uniform());
    data.samples.push_back(std::move(s));
  }

  auto ws = make_workers(model, g, pl, 1);
  Worker& w = ws[0];
  bool use_p1 = model.has_pair1 && graph_has(g, RegionClass::Pair1);
  bool use_p2 = model.has_pair2 && graph_has(g, RegionClass::Pair2);

  auto tables_for = [&](int i) {
    std::vector<double> p1, p2;
    if (use_p1) p1 = pairwise_table(model, model.pair1);
    if (use_p2) p2 = pairwise_table(model, model.pair2);
    const auto& s = data.samples[i];
    for (int v = 0; v < L; ++v) w.labels[v] = s.labels[v];
    fill_tables(model, g, s, D, use_p1 ? &p1 : nullptr, use_p2 ? &p2 : nullptr, w);
    if (lw > 0) loss_augment(g, w.tables, w.labels, lw);
  };

  // messages fixed once; both sides of the check use them untouched
  std::vector<Messages> msgs(samples);
  for (int i = 0; i < samples; ++i) {
    msgs[i].init(g, pl);
    tables_for(i);
    for (int k = 0; k < doc.train.sweeps; ++k) sweep(g, pl, w.tables, eps, msgs[i]);
  }

  ps.zero_grad();
  std::vector<double> g1sum, g2sum;
  if (use_p1) g1sum.assign(std::size_t(K) * K, 0.0);
  if (use_p2) g2sum.assign(std::size_t(K) * K, 0.0);
  for (int i = 0; i < samples; ++i) {
    tables_for(i);
    for (int r = 0; r < g.num_regions(); ++r) {
      const Region& reg = g.region(r);
      w.belief.resize(reg.table_len);
      beliefs_region(g, pl, w.tables, eps, msgs[i], r, w.belief.data());
      w.belief[g.restrict_index(r, w.labels.data())] -= 1.0;
      if (reg.cls == RegionClass::Pair1)
        for (int j = 0; j < reg.table_len; ++j) g1sum[j] += w.belief[j];
      else if (reg.cls == RegionClass::Pair2)
        for (int j = 0; j < reg.table_len; ++j) g2sum[j] += w.belief[j];
      else
        std::copy(w.belief.begin(), w.belief.end(), w.seeds[reg.scope[0]].begin());
    }
    for (int v = 0; v < L; ++v)
      w.nets[v].backward(ps, ps.grad, model.unary_out, w.seeds[v].data());
  }
  if (use_p1) {
    if (model.pair1.linear) {
      for (std::size_t j = 0; j < g1sum.size(); ++j)
        ps.grad[model.pair1.table_param].v[j] += g1sum[j];
    } else {
      ComputeGraph net = model.pair1.net;
      net.forward(ps);
      net.backward(ps, model.pair1.out_node, g1sum.data());
    }
  }
  if (use_p2) {
    if (model.pair2.linear) {
      for (std::size_t j = 0; j < g2sum.size(); ++j)
        ps.grad[model.pair2.table_param].v[j] += g2sum[j];
    } else {
      ComputeGraph net = model.pair2.net;
      net.forward(ps);
      net.backward(ps, model.pair2.out_node, g2sum.data());
    }
  }
  std::vector<Tensor> analytic = ps.grad;

  auto objective = [&] {
    double o = 0.0;
    for (int i = 0; i < samples; ++i) {
      tables_for(i);
      o += dual_objective(g, pl, w.tables, eps, msgs[i]) -
           score_configuration(g, w.tables, w.labels);
    }
    return o;
  };

  GradCheckReport rep;
  for (std::size_t p = 0; p < ps.value.size(); ++p) {
    for (std::size_t j = 0; j < ps.value[p].v.size(); ++j) {
      double save = ps.value[p].v[j];
      ps.value[p].v[j] = save + h;
      double o1 = objective();
      ps.value[p].v[j] = save - h;
      double o2 = objective();
      ps.value[p].v[j] = save;
      double fd = (o1 - o2) / (2.0 * h);
      double rel = std::fabs(analytic[p].v[j] - fd) / std::max(1.0, std::fabs(fd));
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = ps.names[p] + "[" + std::to_string(j) + "]";
      }
    }
  }
  return rep;
}

}  // namespace deepstruct
