#pragma once

#include "deepstruct/config.hpp"
#include "deepstruct/graph.hpp"
#include "deepstruct/inference.hpp"
#include "deepstruct/region.hpp"

namespace deepstruct {

// One shared pairwise potential per distance class: either a free K x K table
// (linear) or a one-hidden-layer network fed a constant scalar 1, emitting all
// K*K entries (a nonlinear reparameterization of the table). Both are
// independent of the sample input.
struct PairwiseNet {
  bool linear = true;
  int table_param = -1;  // linear: index into the store
  ComputeGraph net;      // mlp only
  int in_node = -1;
  int out_node = -1;
};

// The trained object: parameters plus the templates needed to run them.
// Execution state (activations, messages) never lives here, so workers copy
// the graphs and share the store read-only.
struct Model {
  ConfigDoc doc;
  NetworkSpec netspec;  // effective (defaults expanded)
  ParamStore params;

  ComputeGraph unary;  // per-slot shared network template
  int unary_in = -1;
  int unary_out = -1;

  bool has_pair1 = false;
  bool has_pair2 = false;
  PairwiseNet pair1;
  PairwiseNet pair2;
  int first_pair_param = -1;  // store index where pairwise tensors begin (= count if none)

  RegionGraph graph;  // full structure from the config
  MessagePlan plan;
};

RegionGraph build_region_graph(const GraphSpec& spec);

// Same variables/cardinality, unary regions only; used to pretrain unaries
// and by the unary strategy.
RegionGraph strip_to_unary(const RegionGraph& g);

// Builds networks and the region graph, declares every parameter, validates
// shapes and region invariants against the configured temperature. Parameters
// are left zero; call m.params.init_params(seed) for a random start.
Model build_model(const ConfigDoc& doc);

// Current pairwise tables (forwarded through a private net copy for mlp).
// Row-major: entry (m, n) at m*K + n.
std::vector<double> pairwise_table(const Model& m, const PairwiseNet& pn);

}  // namespace deepstruct
