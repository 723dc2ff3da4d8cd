#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deepstruct/checksum.hpp"
#include "deepstruct/data.hpp"
#include "deepstruct/learning.hpp"
#include "deepstruct/model_io.hpp"
#include "deepstruct/oracle.hpp"

namespace fs = std::filesystem;
using namespace deepstruct;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ConfigDoc load_spec(const std::string& path) { return parse_config(read_text(path)); }

constexpr const char* kLogHeader =
    "iteration,elapsed_ms,objective,step_size,val_char_acc,val_word_acc\n";

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                 long long seed) {
  ConfigDoc doc = load_spec(spec_path);
  if (seed >= 0) doc.data.seed = static_cast<std::uint64_t>(seed);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory '" + out_dir + "': " + ec.message());

  GeneratedData gd = generate_dataset(doc.data, ExecMode::Parallel);
  const auto& vocab = doc.data.words.empty() ? builtin_vocabulary() : doc.data.words;

  struct Split {
    const char* name;
    const Dataset* ds;
  } splits[] = {{"train", &gd.train}, {"val", &gd.val}, {"test", &gd.test}};
  for (const auto& sp : splits) {
    std::string path = out_dir + "/" + sp.name + ".bin";
    write_dataset(path, *sp.ds);
    std::printf("wrote %s (%zu samples)\n", path.c_str(), sp.ds->samples.size());
  }
  write_manifest(out_dir + "/manifest.tsv", doc.data, vocab);
  std::printf("wrote %s/manifest.tsv\n", out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& spec_path, const std::string& data_dir,
              const std::string& out_path, const std::string& strategy,
              const std::string& algo, const std::string& log_path, long long seed) {
  ConfigDoc doc = load_spec(spec_path);
  if (!strategy.empty()) {
    if (strategy == "unary")
      doc.train.strategy = TrainConfig::Strategy::UnaryOnly;
    else if (strategy == "joint")
      doc.train.strategy = TrainConfig::Strategy::Joint;
    else if (strategy == "pw")
      doc.train.strategy = TrainConfig::Strategy::PwTrain;
    else
      doc.train.strategy = TrainConfig::Strategy::PretrainJoint;  // pretrain_joint
  }
  if (!algo.empty())
    doc.train.algo =
        algo == "blended" ? TrainConfig::Algo::Blended : TrainConfig::Algo::DoubleLoop;
  if (seed >= 0) doc.train.seed = static_cast<std::uint64_t>(seed);

  Dataset train_set = read_dataset(data_dir + "/train.bin");
  Dataset val_set = read_dataset(data_dir + "/val.bin");

  Model model = build_model(doc);
  model.params.init_params(doc.train.seed);

  std::ofstream log;
  std::ostream* log_ptr = nullptr;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::binary);
    if (!log) throw IoError("cannot open '" + log_path + "' for writing");
    log << kLogHeader;
    log_ptr = &log;
  }

  bool have_checkpoint = false;
  auto checkpoint = [&] {
    save_model(out_path, model);
    have_checkpoint = true;
  };

  TrainResult res;
  try {
    res = run_strategy(model, train_set, &val_set, ExecMode::Parallel, log_ptr,
                       checkpoint);
  } catch (const IoError&) {
    throw;
  } catch (const ValidationError&) {
    throw;
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    if (have_checkpoint)
      std::fprintf(stderr, "last validated checkpoint kept at %s\n", out_path.c_str());
    return 1;
  }
  save_model(out_path, model);

  std::printf("iterations %d\n", res.iterations);
  std::printf("final_objective %.6f\n", res.final_objective);
  if (res.best_val_char >= 0)
    std::printf("best_val_char_acc %.2f\n", res.best_val_char);
  std::printf("model %s\n", out_path.c_str());
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path) {
  Model model = load_model(model_path);
  Dataset data = read_dataset(data_path);
  int k = model.doc.graph.cardinality;
  for (const auto& s : data.samples)
    for (unsigned char lab : s.labels)
      if (lab >= k)
        throw ValidationError("dataset label " + std::to_string(int(lab)) +
                              " out of range for cardinality " + std::to_string(k));
  EvalMetrics m = evaluate(model, data, ExecMode::Parallel);
  std::printf("word_accuracy %.2f\n", m.word_acc);
  std::printf("char_accuracy %.2f\n", m.char_acc);
  return 0;
}

int cmd_gradcheck(const std::string& spec_path, int samples, double h, long long seed) {
  ConfigDoc doc = load_spec(spec_path);
  std::uint64_t s = seed >= 0 ? static_cast<std::uint64_t>(seed) : doc.train.seed;
  GradCheckReport rep = gradient_check(doc, samples, h, s);
  std::printf("max_rel_err %.3g\n", rep.max_rel_err);
  std::printf("worst_param %s\n", rep.worst_param.c_str());
  if (rep.max_rel_err < 1e-4) {
    std::printf("gradcheck passed\n");
    return 0;
  }
  std::fprintf(stderr, "gradcheck failed: %s off by %.3g relative\n",
               rep.worst_param.c_str(), rep.max_rel_err);
  return 1;
}

void print_pairwise(const Model& model, const PairwiseNet& pn, int cls) {
  int k = model.doc.graph.cardinality;
  std::vector<double> t = pairwise_table(model, pn);
  auto letter = [](int i) { return static_cast<char>(i < 26 ? 'a' + i : '?'); };

  std::printf("pairwise class %d (%s), %d x %d\n", cls,
              cls == 1 ? "adjacent pairs" : "distance-2 pairs", k, k);
  std::printf("    ");
  for (int j = 0; j < k; ++j) std::printf("%8c", letter(j));
  std::printf("\n");
  for (int i = 0; i < k; ++i) {
    std::printf("%-4c", letter(i));
    for (int j = 0; j < k; ++j) std::printf("%8.3f", t[std::size_t(i) * k + j]);
    std::printf("\n");
  }

  struct Entry {
    double v;
    int r, c;
  };
  std::vector<Entry> es;
  es.reserve(t.size());
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) es.push_back({t[std::size_t(i) * k + j], i, j});
  std::sort(es.begin(), es.end(), [](const Entry& a, const Entry& b) {
    if (a.v != b.v) return a.v > b.v;
    if (a.r != b.r) return a.r < b.r;
    return a.c < b.c;
  });
  int top = std::min<int>(10, static_cast<int>(es.size()));
  std::printf("top %d entries\n", top);
  for (int i = 0; i < top; ++i)
    std::printf("%c %c %.3f\n", letter(es[i].r), letter(es[i].c), es[i].v);
}

int cmd_inspect(const std::string& model_path, int cls) {
  if (cls != 0 && cls != 1 && cls != 2)
    throw ValidationError("unknown pairwise class " + std::to_string(cls));
  Model model = load_model(model_path);
  if (cls == 1 && !model.has_pair1)
    throw ValidationError("model has no pairwise class 1");
  if (cls == 2 && !model.has_pair2)
    throw ValidationError("model has no pairwise class 2");
  bool any = false;
  if (model.has_pair1 && (cls == 0 || cls == 1)) {
    print_pairwise(model, model.pair1, 1);
    any = true;
  }
  if (model.has_pair2 && (cls == 0 || cls == 2)) {
    if (any) std::printf("\n");
    print_pairwise(model, model.pair2, 2);
    any = true;
  }
  if (!any) std::printf("model has no pairwise tables\n");
  return 0;
}

// Variables as union-find nodes, size-2 regions as edges; a cycle means the
// exactness suite does not apply.
bool is_forest(const RegionGraph& g) {
  std::vector<int> up(g.num_vars());
  for (int v = 0; v < g.num_vars(); ++v) up[v] = v;
  auto root = [&](int v) {
    while (up[v] != v) v = up[v] = up[up[v]];
    return v;
  };
  for (int r = 0; r < g.num_regions(); ++r) {
    const auto& sc = g.region(r).scope;
    if (sc.size() != 2) continue;
    int a = root(sc[0]), b = root(sc[1]);
    if (a == b) return false;
    up[a] = b;
  }
  return true;
}

int cmd_oracle_check(const std::string& spec_path, int trials, long long seed_opt) {
  ConfigDoc doc = load_spec(spec_path);
  std::uint64_t seed = seed_opt >= 0 ? static_cast<std::uint64_t>(seed_opt) : 1;
  double eps = doc.train.epsilon;

  RegionGraph g = build_region_graph(doc.graph);
  auto violations = g.validate(eps);
  if (!violations.empty()) {
    std::string msg = "invalid region graph:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw ValidationError(msg);
  }
  g.config_count(kOracleLimit);
  MessagePlan plan(g);
  bool tree = is_forest(g);

  auto fail = [&](const char* suite, std::uint64_t s, const std::string& detail) {
    std::fprintf(stderr, "FAIL %s: %s (replay with --seed %llu --trials 1)\n", suite,
                 detail.c_str(), static_cast<unsigned long long>(s));
    return 1;
  };

  for (int t = 0; t < trials; ++t) {
    std::uint64_t s = seed + static_cast<std::uint64_t>(t);
    Rng rng(Rng::derive(s, 777));
    PotentialTables f;
    f.resize_for(g);
    for (auto& tab : f.f)
      for (auto& x : tab) x = rng.normal();

    // belief normalization mid-run, before any convergence
    Messages m;
    m.init(g, plan);
    for (int k = 0; k < 3; ++k) sweep(g, plan, f, eps, m);
    std::vector<double> b;
    for (int r = 0; r < g.num_regions(); ++r) {
      b.resize(g.region(r).table_len);
      beliefs_region(g, plan, f, eps, m, r, b.data());
      double sum = 0.0;
      for (double x : b) sum += x;
      if (std::fabs(sum - 1.0) > 1e-10)
        return fail("normalization", s,
                    "region " + std::to_string(r) + " beliefs sum to " +
                        std::to_string(sum));
    }

    // per-sweep dual monotonicity
    m.reset();
    double prev = dual_objective(g, plan, f, eps, m);
    for (int k = 0; k < 30; ++k) {
      sweep(g, plan, f, eps, m);
      double cur = dual_objective(g, plan, f, eps, m);
      if (cur > prev + 1e-9)
        return fail("monotonicity", s,
                    "sweep " + std::to_string(k + 1) + " raised the dual by " +
                        std::to_string(cur - prev));
      prev = cur;
    }

    // converged dual bounds the exact partition value from above
    m.reset();
    double dual = run_to_convergence(g, plan, f, eps, m).first;
    double exact = brute_force_log_partition(g, f, eps);
    if (dual < exact - 1e-9)
      return fail("upper-bound", s,
                  "dual " + std::to_string(dual) + " below exact " +
                      std::to_string(exact));

    // at temperature 0 a forest solves MAP exactly
    if (tree) {
      Messages m0;
      m0.init(g, plan);
      double d0 = run_to_convergence(g, plan, f, 0.0, m0).first;
      double best = brute_force_log_partition(g, f, 0.0);
      if (std::fabs(d0 - best) > 1e-8)
        return fail("tree-exactness", s,
                    "temperature-0 dual " + std::to_string(d0) + " vs exact max " +
                        std::to_string(best));
      std::vector<int> y = map_decode(g, plan, f, 0.0, m0);
      double sc = score_configuration(g, f, y);
      if (std::fabs(sc - best) > 1e-8)
        return fail("tree-exactness", s,
                    "decoded score " + std::to_string(sc) + " vs exact max " +
                        std::to_string(best));
    }
  }

  std::printf("oracle-check passed: %d trials (normalization, monotonicity, "
              "upper-bound%s)\n",
              trials, tree ? ", tree-exactness" : "");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint training of neural network potentials and Markov random "
               "fields with convex message passing"};
  app.require_subcommand(1);
  int rc = 0;

  std::string spec, out_dir, data_dir, out_path, model_path, data_path, log_path;
  std::string strategy, algo;
  long long seed = -1;
  int samples = 3, trials = 100, pairwise_class = 0;
  double h = 1e-5;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic word dataset");
  gen->add_option("--spec", spec, "config file")->required();
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--seed", seed, "override the data seed");
  gen->callback([&] { rc = cmd_gen_data(spec, out_dir, seed); });

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--spec", spec, "config file")->required();
  train->add_option("--data", data_dir, "directory with train.bin/val.bin")->required();
  train->add_option("--out", out_path, "model output file")->required();
  train->add_option("--strategy", strategy, "unary | joint | pw | pretrain_joint")
      ->check(CLI::IsMember({"unary", "joint", "pw", "pretrain_joint"}));
  train->add_option("--algo", algo, "blended | doubleloop")
      ->check(CLI::IsMember({"blended", "doubleloop"}));
  train->add_option("--log", log_path, "iteration log (csv)");
  train->add_option("--seed", seed, "override the training seed");
  train->callback(
      [&] { rc = cmd_train(spec, data_dir, out_path, strategy, algo, log_path, seed); });

  auto* ev = app.add_subcommand("eval", "evaluate a model on a dataset");
  ev->add_option("--model", model_path, "model file")->required();
  ev->add_option("--data", data_path, "dataset file")->required();
  ev->add_option("--seed", seed, "accepted for interface symmetry");
  ev->callback([&] { rc = cmd_eval(model_path, data_path); });

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gc->add_option("--spec", spec, "config file")->required();
  gc->add_option("--samples", samples, "random samples to check");
  gc->add_option("--fd-step", h, "central-difference step");
  gc->add_option("--seed", seed, "override the seed");
  gc->callback([&] { rc = cmd_gradcheck(spec, samples, h, seed); });

  auto* ins = app.add_subcommand("inspect", "dump learned pairwise tables");
  ins->add_option("--model", model_path, "model file")->required();
  ins->add_option("--pairwise-class", pairwise_class, "1 = adjacent, 2 = distance 2");
  ins->add_option("--seed", seed, "accepted for interface symmetry");
  ins->callback([&] { rc = cmd_inspect(model_path, pairwise_class); });

  auto* oc = app.add_subcommand("oracle-check", "enumeration-oracle property suites");
  oc->add_option("--spec", spec, "config file")->required();
  oc->add_option("--trials", trials, "randomized instances");
  oc->add_option("--seed", seed, "base instance seed");
  oc->callback([&] { rc = cmd_oracle_check(spec, trials, seed); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
