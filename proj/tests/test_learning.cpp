#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "deepstruct/learning.hpp"
#include "deepstruct/model.hpp"
#include "deepstruct/oracle.hpp"
#include "deepstruct/rng.hpp"

using namespace deepstruct;

namespace {

// tiny 3-variable, 3-letter setup: 6-pixel slots, one hidden layer of 5
std::string tiny_config(const std::string& train_lines,
                        const std::string& graph_lines = "") {
  return "[network]\n"
         "input = x 6\n"
         "node = h affine x Wh:5x6 bh:5\n"
         "node = hr relu h\n"
         "node = scores affine hr Ws:3x5 bs:3\n"
         "output = scores\n"
         "[graph]\n"
         "variables = 3\n"
         "cardinality = 3\n" +
         graph_lines + "[train]\n" + train_lines;
}

Dataset synth(int n, int length, int k, int dim, std::uint64_t seed) {
  Dataset ds;
  ds.word_length = length;
  ds.height = 1;
  ds.width = dim;
  ds.samples.resize(n);
  Rng rng(seed);
  for (auto& s : ds.samples) {
    s.labels.resize(length);
    for (auto& l : s.labels) l = static_cast<unsigned char>(rng.uniform_int(k));
    s.image.resize(static_cast<std::size_t>(length) * dim);
    for (auto& x : s.image) x = static_cast<float>(rng.uniform(0.0, 1.0));
  }
  return ds;
}

std::vector<int> truth_of(const Dataset::Sample& s) {
  return std::vector<int>(s.labels.begin(), s.labels.end());
}

bool params_equal(const ParamStore& a, const ParamStore& b) {
  if (a.value.size() != b.value.size()) return false;
  for (std::size_t i = 0; i < a.value.size(); ++i) {
    if (a.value[i].v.size() != b.value[i].v.size()) return false;
    if (std::memcmp(a.value[i].v.data(), b.value[i].v.data(),
                    a.value[i].v.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("forward potentials reproduce hand-computed scores and shared tables") {
  ConfigDoc doc = parse_config(
      "[network]\n"
      "input = x 2\n"
      "node = scores affine x W:3x2 b:3\n"
      "output = scores\n"
      "[graph]\n"
      "variables = 2\n"
      "cardinality = 3\n");
  Model m = build_model(doc);
  // W rows are per-letter score weights over the two pixels
  Tensor& W = m.params.value[m.params.require("W")];
  Tensor& b = m.params.value[m.params.require("b")];
  W.v = {1.0, 2.0, -1.0, 0.5, 0.0, 3.0};
  b.v = {0.1, 0.2, 0.3};
  Tensor& T = m.params.value[m.params.require("pair1.T")];
  for (int i = 0; i < 9; ++i) T.v[i] = 0.1 * i;

  Dataset ds = synth(1, 2, 3, 2, 9);
  ds.samples[0].image = {1.0f, 0.5f, 0.25f, 2.0f};
  PotentialTables f = forward_potentials(m, m.graph, ds.samples[0]);

  // unary region i holds W * slot_i + b
  CHECK(f.f[0][0] == doctest::Approx(1.0 * 1 + 2.0 * 0.5 + 0.1));
  CHECK(f.f[0][1] == doctest::Approx(-1.0 * 1 + 0.5 * 0.5 + 0.2));
  CHECK(f.f[0][2] == doctest::Approx(0.0 * 1 + 3.0 * 0.5 + 0.3));
  CHECK(f.f[1][0] == doctest::Approx(1.0 * 0.25 + 2.0 * 2.0 + 0.1));
  CHECK(f.f[1][2] == doctest::Approx(0.0 * 0.25 + 3.0 * 2.0 + 0.3));
  // the single pair region copies the shared table
  REQUIRE(f.f[2].size() == 9);
  for (int i = 0; i < 9; ++i) CHECK(f.f[2][i] == doctest::Approx(0.1 * i));
}

TEST_CASE("forward potentials route the mlp pairwise head through its network") {
  ConfigDoc doc = parse_config(tiny_config("seed = 4\n", "pairwise = mlp\npairwise_hidden = 4\n"));
  Model m = build_model(doc);
  m.params.init_params(12);
  Dataset ds = synth(1, 3, 3, 6, 13);
  PotentialTables f = forward_potentials(m, m.graph, ds.samples[0]);
  std::vector<double> tab = pairwise_table(m, m.pair1);
  bool nonzero = false;
  for (double v : tab) nonzero = nonzero || v != 0.0;
  CHECK(nonzero);
  for (int r = 0; r < m.graph.num_regions(); ++r) {
    if (m.graph.region(r).scope.size() != 2) continue;
    REQUIRE(f.f[r].size() == tab.size());
    for (std::size_t i = 0; i < tab.size(); ++i) CHECK(f.f[r][i] == tab[i]);
  }
}

TEST_CASE("objective at fixed messages matches dual minus truth score") {
  ConfigDoc doc = parse_config(tiny_config("epsilon = 0.7\n"));
  Model m = build_model(doc);
  m.params.init_params(21);
  Dataset ds = synth(3, 3, 3, 6, 22);

  for (double lw : {0.0, 2.0}) {
    std::vector<int> idx = {0, 2};
    std::vector<Messages> msgs(idx.size());
    double want = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      PotentialTables f = forward_potentials(m, m.graph, ds.samples[idx[i]]);
      std::vector<int> truth = truth_of(ds.samples[idx[i]]);
      double truth_score = score_configuration(m.graph, f, truth);
      loss_augment(m.graph, f, truth, lw);
      msgs[i].init(m.graph, m.plan);
      for (int s = 0; s < 2; ++s) sweep(m.graph, m.plan, f, 0.7, msgs[i]);
      want += dual_objective(m.graph, m.plan, f, 0.7, msgs[i]) - truth_score;
    }
    double got = objective_value(m, m.graph, m.plan, ds, idx, msgs, 0.7, lw);
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("analytic gradients agree with finite differences across variants") {
  struct Variant {
    const char* name;
    std::string graph_lines;
    std::string train_lines;
  };
  const Variant variants[] = {
      {"linear order-1", "", "epsilon = 1\nsweeps = 4\n"},
      {"mlp pairwise", "pairwise = mlp\npairwise_hidden = 4\n", "epsilon = 1\nsweeps = 4\n"},
      {"order-2", "order = 2\n", "epsilon = 0.5\nsweeps = 4\n"},
      {"loss-augmented", "", "epsilon = 1\nsweeps = 4\nloss_weight = 1.5\n"},
  };
  for (const auto& v : variants) {
    CAPTURE(v.name);
    ConfigDoc doc = parse_config(tiny_config(v.train_lines, v.graph_lines));
    GradCheckReport rep = gradient_check(doc, 2, 1e-5, 77);
    CAPTURE(rep.worst_param);
    CHECK(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("zero-temperature objective equals the structured hinge") {
  ConfigDoc doc = parse_config(tiny_config("epsilon = 0\nloss_weight = 1\n"));
  Model m = build_model(doc);
  m.params.init_params(31);
  Dataset ds = synth(5, 3, 3, 6, 32);

  for (int i = 0; i < 5; ++i) {
    PotentialTables raw = forward_potentials(m, m.graph, ds.samples[i]);
    std::vector<int> truth = truth_of(ds.samples[i]);
    PotentialTables aug = raw;
    loss_augment(m.graph, aug, truth, 1.0);
    Messages msg;
    msg.init(m.graph, m.plan);
    run_to_convergence(m.graph, m.plan, aug, 0.0, msg, 1e-12, 500);

    double got = objective_value(m, m.graph, m.plan, ds, {i}, {msg}, 0.0, 1.0);
    double hinge = brute_force_log_partition(m.graph, aug, 0.0) -
                   score_configuration(m.graph, raw, truth);
    CHECK(std::abs(got - hinge) < 1e-8);
    CHECK(got >= -1e-8);  // the hinge never goes negative
  }
}

TEST_CASE("a step against matching target beliefs leaves parameters untouched") {
  ConfigDoc doc = parse_config(tiny_config("epsilon = 1\nbatch_size = 8\nseed = 3\n"));
  Model m = build_model(doc);
  m.params.init_params(41);
  Dataset ds = synth(4, 3, 3, 6, 42);

  // targets = the beliefs the first blended iteration itself produces: one
  // sweep from cold messages on unaugmented tables
  std::vector<std::vector<std::vector<double>>> targets(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    PotentialTables f = forward_potentials(m, m.graph, ds.samples[i]);
    Messages msg;
    msg.init(m.graph, m.plan);
    sweep(m.graph, m.plan, f, 1.0, msg);
    targets[i] = beliefs_from_messages(m.graph, m.plan, f, 1.0, msg);
  }

  ParamStore before = m.params;
  TrainOptions opt;
  opt.max_iterations = 1;
  opt.targets = &targets;
  train(m, ds, nullptr, doc.train, opt);
  CHECK(params_equal(before, m.params));
}

TEST_CASE("training is bitwise deterministic across reruns and execution modes") {
  ConfigDoc doc = parse_config(
      tiny_config("max_iterations = 10\nbatch_size = 4\nstep_size = 0.05\nseed = 6\n"));
  Dataset ds = synth(10, 3, 3, 6, 52);

  auto run = [&](ExecMode mode) {
    Model m = build_model(doc);
    m.params.init_params(51);
    TrainResult r = train(m, ds, nullptr, doc.train, {}, mode);
    return std::pair{std::move(m), r};
  };
  auto [m1, r1] = run(ExecMode::Serial);
  auto [m2, r2] = run(ExecMode::Serial);
  auto [m3, r3] = run(ExecMode::Parallel);
  CHECK(params_equal(m1.params, m2.params));
  CHECK(params_equal(m1.params, m3.params));
  CHECK(r1.final_objective == r2.final_objective);
  CHECK(r1.final_objective == r3.final_objective);
  REQUIRE(r1.log.size() == r3.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i)
    CHECK(r1.log[i].objective == r3.log[i].objective);

  // the objective should actually move with a nonzero step
  CHECK(r1.log.front().objective != r1.log.back().objective);
}

TEST_CASE("unary strategy trains the network but leaves pairwise weights zero") {
  ConfigDoc doc = parse_config(tiny_config(
      "strategy = unary\nmax_iterations = 6\nbatch_size = 4\nstep_size = 0.05\n"));
  Model m = build_model(doc);
  m.params.init_params(61);
  Dataset ds = synth(8, 3, 3, 6, 62);
  run_strategy(m, ds, nullptr);

  bool unary_moved = false;
  Model fresh = build_model(doc);
  fresh.params.init_params(61);
  for (int p = 0; p < m.first_pair_param; ++p)
    if (m.params.value[p].v != fresh.params.value[p].v) unary_moved = true;
  CHECK(unary_moved);
  for (int p = m.first_pair_param; p < static_cast<int>(m.params.value.size()); ++p)
    for (double v : m.params.value[p].v) CHECK(v == 0.0);
}

TEST_CASE("pairwise phase of the freeze strategy never touches unary weights") {
  auto run_pw = [&](int phase2_iters) {
    ConfigDoc doc = parse_config(tiny_config(
        "strategy = pw\npretrain_iterations = 5\nmax_iterations = " +
        std::to_string(phase2_iters) + "\nbatch_size = 4\nstep_size = 0.05\n"));
    Model m = build_model(doc);
    m.params.init_params(71);
    Dataset ds = synth(8, 3, 3, 6, 72);
    run_strategy(m, ds, nullptr);
    return m;
  };
  Model a = run_pw(2);
  Model b = run_pw(9);
  // identical phase one; phase two only moves pairwise tensors
  for (int p = 0; p < a.first_pair_param; ++p)
    CHECK(a.params.value[p].v == b.params.value[p].v);
  bool pair_differs = false;
  for (int p = a.first_pair_param; p < static_cast<int>(a.params.value.size()); ++p)
    if (a.params.value[p].v != b.params.value[p].v) pair_differs = true;
  CHECK(pair_differs);
}

TEST_CASE("blended and double-loop coincide when no pairwise structure exists") {
  auto run_algo = [&](const char* algo) {
    ConfigDoc doc = parse_config(tiny_config(
        std::string("strategy = unary\nalgo = ") + algo +
        "\nmax_iterations = 8\nbatch_size = 4\nstep_size = 0.05\n"));
    Model m = build_model(doc);
    m.params.init_params(81);
    Dataset ds = synth(8, 3, 3, 6, 82);
    TrainResult r = run_strategy(m, ds, nullptr);
    return std::pair{std::move(m), r};
  };
  auto [mb, rb] = run_algo("blended");
  auto [md, rd] = run_algo("doubleloop");
  CHECK(params_equal(mb.params, md.params));
  REQUIRE(rb.log.size() == rd.log.size());
  for (std::size_t i = 0; i < rb.log.size(); ++i)
    CHECK(rb.log[i].objective == rd.log[i].objective);
}

TEST_CASE("validation decays the step exactly on strict decreases") {
  ConfigDoc doc = parse_config(tiny_config(
      "max_iterations = 15\nbatch_size = 4\nstep_size = 0.2\nval_interval = 1\nseed = 2\n"));
  Model m = build_model(doc);
  m.params.init_params(91);
  Dataset ds = synth(8, 3, 3, 6, 92);
  Dataset vs = synth(6, 3, 3, 6, 93);
  TrainResult r = train(m, ds, &vs, doc.train);

  REQUIRE(r.log.size() == 15);
  double best = -1.0;
  double expect_step = doc.train.step_size;
  int decays = 0, holds = 0;
  for (const auto& row : r.log) {
    CHECK(row.step_size == doctest::Approx(expect_step).epsilon(1e-12));
    REQUIRE(row.val_char >= 0.0);  // val_interval = 1: every row validates
    if (row.val_char < best) {
      expect_step *= 0.5;
      ++decays;
    } else {
      ++holds;
    }
    if (row.val_char > best) best = row.val_char;
  }
  CHECK(r.best_val_char == doctest::Approx(best));
  // the chosen seed exercises both branches
  CHECK(decays > 0);
  CHECK(holds > 0);
}

TEST_CASE("evaluating a zero model decodes every slot to the first letter") {
  ConfigDoc doc = parse_config(tiny_config(""));
  Model m = build_model(doc);  // all parameters zero
  Dataset ds = synth(40, 3, 3, 6, 101);
  EvalMetrics em = evaluate(m, ds);

  int chars = 0, char_hits = 0, word_hits = 0;
  for (const auto& s : ds.samples) {
    bool all = true;
    for (unsigned char l : s.labels) {
      ++chars;
      if (l == 0) ++char_hits;
      else all = false;
    }
    if (all) ++word_hits;
  }
  CHECK(em.char_acc == doctest::Approx(100.0 * char_hits / chars).epsilon(1e-12));
  CHECK(em.word_acc ==
        doctest::Approx(100.0 * word_hits / ds.samples.size()).epsilon(1e-12));
}

TEST_CASE("evaluate defaults to the model's own structure") {
  ConfigDoc doc = parse_config(tiny_config(""));
  Model m = build_model(doc);
  m.params.init_params(111);
  Dataset ds = synth(12, 3, 3, 6, 112);
  EvalMetrics a = evaluate(m, ds);
  EvalMetrics b = evaluate(m, ds, ExecMode::Serial, &m.graph, &m.plan);
  CHECK(a.char_acc == b.char_acc);
  CHECK(a.word_acc == b.word_acc);
}

TEST_CASE("exploding steps abort with a non-finite diagnostic") {
  ConfigDoc doc = parse_config(tiny_config(
      "max_iterations = 50\nbatch_size = 4\nstep_size = 1e200\n"));
  Model m = build_model(doc);
  m.params.init_params(121);
  Dataset ds = synth(8, 3, 3, 6, 122);
  CHECK_THROWS_WITH_AS(train(m, ds, nullptr, doc.train),
                       doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("training log carries phase offsets through a two-phase strategy") {
  ConfigDoc doc = parse_config(tiny_config(
      "strategy = pretrain_joint\npretrain_iterations = 3\nmax_iterations = 4\n"
      "batch_size = 4\nstep_size = 0.05\n"));
  Model m = build_model(doc);
  m.params.init_params(131);
  Dataset ds = synth(8, 3, 3, 6, 132);
  std::ostringstream log;
  TrainResult r = run_strategy(m, ds, nullptr, ExecMode::Serial, &log);
  REQUIRE(r.log.size() == 7);
  for (int i = 0; i < 7; ++i) CHECK(r.log[i].iteration == i + 1);
  for (std::size_t i = 1; i < r.log.size(); ++i)
    CHECK(r.log[i].elapsed_ms >= r.log[i - 1].elapsed_ms);
  // streamed log: one line per iteration
  std::string text = log.str();
  int lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 7);
}
