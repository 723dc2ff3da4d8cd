#include "deepstruct/model.hpp"

#include <map>

namespace deepstruct {

namespace {

ComputeGraph build_network_graph(const NetworkSpec& spec, ParamStore& ps, int* in_id,
                                 int* out_id) {
  ComputeGraph g;
  std::map<std::string, int> ids;
  *in_id = g.add_input(spec.input_name, spec.input_dim);
  ids[spec.input_name] = *in_id;
  for (const NodeDecl& n : spec.nodes) {
    std::vector<int> ins;
    for (const auto& name : n.inputs) {
      auto it = ids.find(name);
      if (it == ids.end())
        throw ValidationError("node '" + n.name + "' references unknown node '" + name +
                              "'");
      ins.push_back(it->second);
    }
    int id = -1;
    if (n.kind == "affine") {
      ps.add(n.params[0].name, n.params[0].shape);
      ps.add(n.params[1].name, n.params[1].shape);
      int w = g.add_param(n.params[0].name, ps);
      int b = g.add_param(n.params[1].name, ps);
      id = g.add_affine(n.name, ins[0], w, b);
    } else if (n.kind == "relu") {
      id = g.add_relu(n.name, ins[0]);
    } else if (n.kind == "sigmoid") {
      id = g.add_sigmoid(n.name, ins[0]);
    } else if (n.kind == "softmax") {
      id = g.add_softmax(n.name, ins[0]);
    } else if (n.kind == "concat") {
      id = g.add_concat(n.name, ins);
    } else if (n.kind == "lookup") {
      ps.add(n.params[0].name, n.params[0].shape);
      int m = g.add_param(n.params[0].name, ps);
      id = g.add_lookup(n.name, m);
    } else {
      throw ValidationError("unknown node kind '" + n.kind + "'");
    }
    ids[n.name] = id;
  }
  auto it = ids.find(spec.output_name);
  if (it == ids.end())
    throw ValidationError("output references unknown node '" + spec.output_name + "'");
  *out_id = it->second;
  return g;
}

PairwiseNet build_pairwise(const std::string& cls, const GraphSpec& spec, int k,
                           ParamStore& ps) {
  PairwiseNet pn;
  if (spec.pairwise == GraphSpec::Pairwise::Linear) {
    pn.linear = true;
    pn.table_param = ps.add(cls + ".T", {k, k});
    return pn;
  }
  pn.linear = false;
  int h = spec.pairwise_hidden;
  ps.add(cls + ".W1", {h, 1});
  ps.add(cls + ".b1", {h});
  ps.add(cls + ".W2", {k * k, h});
  ps.add(cls + ".b2", {k * k});
  ComputeGraph& g = pn.net;
  pn.in_node = g.add_input("one", 1);
  int w1 = g.add_param(cls + ".W1", ps);
  int b1 = g.add_param(cls + ".b1", ps);
  int a1 = g.add_affine("h", pn.in_node, w1, b1);
  int r1 = g.add_relu("r", a1);
  int w2 = g.add_param(cls + ".W2", ps);
  int b2 = g.add_param(cls + ".b2", ps);
  pn.out_node = g.add_affine("table", r1, w2, b2);
  double one = 1.0;
  g.set_input(pn.in_node, &one, 1);
  return pn;
}

}  // namespace

RegionGraph build_region_graph(const GraphSpec& spec) {
  if (!spec.explicit_regions)
    return build_chain_model(spec.variables, spec.cardinality, spec.order, spec.c_unary,
                             spec.c_pair1, spec.c_pair2);
  RegionGraph g(spec.variables, spec.cardinality);
  for (const auto& scope : spec.regions) {
    if (scope.size() == 1) {
      g.add_region(scope, spec.c_unary, RegionClass::Unary);
    } else {
      bool adjacent = scope[1] - scope[0] == 1;
      g.add_region(scope, adjacent ? spec.c_pair1 : spec.c_pair2,
                   adjacent ? RegionClass::Pair1 : RegionClass::Pair2);
    }
  }
  g.finalize();
  return g;
}

RegionGraph strip_to_unary(const RegionGraph& g) {
  RegionGraph out(g.num_vars(), g.card());
  for (int r = 0; r < g.num_regions(); ++r)
    if (g.region(r).scope.size() == 1)
      out.add_region(g.region(r).scope, g.region(r).c, g.region(r).cls);
  out.finalize();
  return out;
}

Model build_model(const ConfigDoc& doc) {
  Model m;
  m.doc = doc;
  m.netspec = effective_network(doc);
  m.graph = build_region_graph(doc.graph);

  auto violations = m.graph.validate(doc.train.epsilon);
  if (!violations.empty()) {
    std::string msg = "invalid region graph:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw ValidationError(msg);
  }
  m.plan.build(m.graph);

  m.unary = build_network_graph(m.netspec, m.params, &m.unary_in, &m.unary_out);
  int out_dim = static_cast<int>(Tensor::numel(m.unary.node(m.unary_out).val.shape));
  if (out_dim != doc.graph.cardinality)
    throw ValidationError("network output size " + std::to_string(out_dim) +
                          " must equal cardinality " +
                          std::to_string(doc.graph.cardinality));

  int k = doc.graph.cardinality;
  for (int r = 0; r < m.graph.num_regions(); ++r) {
    if (m.graph.region(r).cls == RegionClass::Pair1) m.has_pair1 = true;
    if (m.graph.region(r).cls == RegionClass::Pair2) m.has_pair2 = true;
  }
  m.first_pair_param = static_cast<int>(m.params.names.size());
  if (m.has_pair1) m.pair1 = build_pairwise("pair1", doc.graph, k, m.params);
  if (m.has_pair2) m.pair2 = build_pairwise("pair2", doc.graph, k, m.params);
  return m;
}

std::vector<double> pairwise_table(const Model& m, const PairwiseNet& pn) {
  int k = m.doc.graph.cardinality;
  if (pn.linear) {
    const Tensor& t = m.params.value[pn.table_param];
    return t.v;
  }
  ComputeGraph net = pn.net;
  net.forward(m.params);
  std::vector<double> out(static_cast<std::size_t>(k) * k);
  const Tensor& v = net.value(pn.out_node);
  std::copy(v.v.begin(), v.v.end(), out.begin());
  return out;
}

}  // namespace deepstruct
