#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "deepstruct/data.hpp"
#include "deepstruct/model.hpp"
#include "deepstruct/parallel.hpp"

namespace deepstruct {

struct EvalMetrics {
  double char_acc = 0.0;
  double word_acc = 0.0;
};

struct TrainLogRow {
  int iteration = 0;
  double elapsed_ms = 0.0;
  double objective = 0.0;   // batch sum of (dual - truth score)
  double step_size = 0.0;
  double val_char = -1.0;   // < 0 means no validation pass this row
  double val_word = -1.0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  double final_objective = 0.0;
  double best_val_char = -1.0;
  int iterations = 0;
};

// Extra knobs used by strategy phases and tests; everything defaults to the
// plain single-phase behaviour driven by the TrainConfig.
struct TrainOptions {
  const RegionGraph* graph = nullptr;  // active structure (default: model.graph)
  const MessagePlan* plan = nullptr;
  std::vector<bool> frozen;            // per parameter tensor; empty = none
  double step_size = -1.0;             // override cfg.step_size when > 0
  int max_iterations = -1;             // override when >= 0
  int iter_offset = 0;                 // log numbering across phases
  double elapsed_offset_ms = 0.0;
  // optional general target distributions, per sample / active region id;
  // empty = point mass on the truth
  const std::vector<std::vector<std::vector<double>>>* targets = nullptr;
  std::function<void()> on_validate;   // checkpoint hook
};

// Potentials of one sample on the given structure: shared unary net forwarded
// per slot, shared pairwise tables copied per pair region. Convenience path
// for tests; the trainer keeps its own per-worker buffers.
PotentialTables forward_potentials(const Model& m, const RegionGraph& g,
                                   const Dataset::Sample& s);

// Sum over the given samples of dual(current messages) - score(truth).
// Messages are parallel to idx and used as-is (no sweeps); tables are
// loss-augmented when loss_weight > 0.
double objective_value(const Model& model, const RegionGraph& g, const MessagePlan& plan,
                       const Dataset& data, const std::vector<int>& idx,
                       const std::vector<Messages>& msgs, double eps, double loss_weight);

// One training phase. Per iteration: forward potentials for the mini-batch,
// one warm-started sweep per sample (blended) or cfg.sweeps sweeps from reset
// (doubleloop), beliefs, then a summed-gradient momentum step. Deterministic
// for a fixed seed in both execution modes.
TrainResult train(Model& model, const Dataset& data, const Dataset* val,
                  const TrainConfig& cfg, const TrainOptions& opt = {},
                  ExecMode mode = ExecMode::Serial, std::ostream* log_stream = nullptr);

// Drives the full strategy from cfg.strategy, including pretraining phases.
TrainResult run_strategy(Model& model, const Dataset& data, const Dataset* val,
                         ExecMode mode = ExecMode::Serial,
                         std::ostream* log_stream = nullptr,
                         const std::function<void()>& checkpoint = {});

// Fresh zero messages, 20 sweeps at temperature 0, per-variable decode.
EvalMetrics evaluate(const Model& model, const Dataset& data,
                     ExecMode mode = ExecMode::Serial,
                     const RegionGraph* graph = nullptr,
                     const MessagePlan* plan = nullptr);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
};

// Central finite differences of the full structured objective at fixed
// messages (prepared with cfg.sweeps sweeps) against the analytic gradient,
// over every parameter element, on random inputs and labels.
GradCheckReport gradient_check(const ConfigDoc& doc, int samples, double h,
                               std::uint64_t seed);

}  // namespace deepstruct
