#include "deepstruct/graph.hpp"

#include <algorithm>
#include <cmath>

namespace deepstruct {

int ParamStore::add(const std::string& name, const std::vector<int>& shape) {
  auto it = index.find(name);
  if (it != index.end()) {
    if (value[it->second].shape != shape)
      throw ValidationError("parameter '" + name + "' redeclared with a different shape");
    return it->second;
  }
  int id = static_cast<int>(names.size());
  names.push_back(name);
  value.emplace_back(shape);
  grad.emplace_back(shape);
  vel.emplace_back(shape);
  index[name] = id;
  return id;
}

int ParamStore::find(const std::string& name) const {
  auto it = index.find(name);
  return it == index.end() ? -1 : it->second;
}

int ParamStore::require(const std::string& name) const {
  int id = find(name);
  if (id < 0) throw ValidationError("unknown parameter '" + name + "'");
  return id;
}

void ParamStore::zero_grad() {
  for (auto& g : grad) g.zero();
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& t : value) n += t.size();
  return n;
}

void ParamStore::init_params(std::uint64_t seed) {
  for (std::size_t i = 0; i < value.size(); ++i) {
    Tensor& t = value[i];
    vel[i].zero();
    if (t.shape.size() < 2) {
      t.zero();  // biases
      continue;
    }
    int fan_out = t.shape[0], fan_in = t.shape[1];
    double s = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(Rng::derive(seed, 0x70000000ULL + i));
    for (auto& x : t.v) x = rng.uniform(-s, s);
  }
}

namespace {

int len_of(const Tensor& t) { return static_cast<int>(t.size()); }

}  // namespace

int ComputeGraph::push(Node n) {
  if (by_name_.count(n.name))
    throw ValidationError("duplicate node name '" + n.name + "'");
  int id = static_cast<int>(nodes_.size());
  by_name_[n.name] = id;
  nodes_.push_back(std::move(n));
  return id;
}

int ComputeGraph::add_input(const std::string& name, int n) {
  if (n <= 0) throw ValidationError("input '" + name + "' needs a positive size");
  Node node{Op::Input, name, {}, -1, -1, false, Tensor({n}), Tensor({n})};
  return push(std::move(node));
}

int ComputeGraph::add_param(const std::string& name, const ParamStore& ps) {
  int pid = ps.require(name);
  Node node{Op::Param, name, {}, pid, -1, false, Tensor(), Tensor()};
  // val/grad stay empty: consumers read the store directly, no copies.
  node.val.shape = ps.value[pid].shape;
  return push(std::move(node));
}

int ComputeGraph::add_affine(const std::string& name, int x, int w, int b) {
  const Node& nx = nodes_.at(x);
  const Node& nw = nodes_.at(w);
  const Node& nb = nodes_.at(b);
  if (nw.op != Op::Param || nb.op != Op::Param)
    throw ValidationError("affine node '" + name + "' expects parameter nodes for W and b");
  if (nw.val.shape.size() != 2)
    throw ValidationError("affine node '" + name + "': W must be a matrix");
  int out = nw.val.shape[0], in = nw.val.shape[1];
  if (len_of(nx.val) != in)
    throw ValidationError("affine node '" + name + "': input size " +
                          std::to_string(len_of(nx.val)) + " does not match W columns " +
                          std::to_string(in));
  if (static_cast<int>(Tensor::numel(nb.val.shape)) != out)
    throw ValidationError("affine node '" + name + "': bias size does not match W rows");
  Node node{Op::Affine, name, {x, w, b}, -1, -1, false, Tensor({out}), Tensor({out})};
  return push(std::move(node));
}

int ComputeGraph::add_relu(const std::string& name, int x) {
  int n = len_of(nodes_.at(x).val);
  Node node{Op::Relu, name, {x}, -1, -1, false, Tensor({n}), Tensor({n})};
  return push(std::move(node));
}

int ComputeGraph::add_sigmoid(const std::string& name, int x) {
  int n = len_of(nodes_.at(x).val);
  Node node{Op::Sigmoid, name, {x}, -1, -1, false, Tensor({n}), Tensor({n})};
  return push(std::move(node));
}

int ComputeGraph::add_softmax(const std::string& name, int x) {
  int n = len_of(nodes_.at(x).val);
  Node node{Op::Softmax, name, {x}, -1, -1, false, Tensor({n}), Tensor({n})};
  return push(std::move(node));
}

int ComputeGraph::add_concat(const std::string& name, const std::vector<int>& xs) {
  if (xs.empty()) throw ValidationError("concat node '" + name + "' needs inputs");
  int n = 0;
  for (int x : xs) n += len_of(nodes_.at(x).val);
  Node node{Op::Concat, name, xs, -1, -1, false, Tensor({n}), Tensor({n})};
  return push(std::move(node));
}

int ComputeGraph::add_lookup(const std::string& name, int matrix) {
  const Node& nm = nodes_.at(matrix);
  if (nm.op != Op::Param || nm.val.shape.size() != 2)
    throw ValidationError("lookup node '" + name + "' expects a parameter matrix");
  int cols = nm.val.shape[1];
  Node node{Op::Lookup, name, {matrix}, -1, -1, false, Tensor({cols}), Tensor({cols})};
  return push(std::move(node));
}

int ComputeGraph::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

void ComputeGraph::set_input(int id, const double* x, int n) {
  Node& node = nodes_.at(id);
  if (node.op != Op::Input)
    throw ValidationError("node '" + node.name + "' is not an input");
  if (n != len_of(node.val))
    throw ValidationError("input '" + node.name + "': got " + std::to_string(n) +
                          " values, expected " + std::to_string(len_of(node.val)));
  std::copy(x, x + n, node.val.v.begin());
  node.bound = true;
}

void ComputeGraph::set_input(int id, const float* x, int n) {
  Node& node = nodes_.at(id);
  if (node.op != Op::Input)
    throw ValidationError("node '" + node.name + "' is not an input");
  if (n != len_of(node.val))
    throw ValidationError("input '" + node.name + "': got " + std::to_string(n) +
                          " values, expected " + std::to_string(len_of(node.val)));
  for (int i = 0; i < n; ++i) node.val.v[i] = static_cast<double>(x[i]);
  node.bound = true;
}

void ComputeGraph::set_row(int id, int row) {
  Node& node = nodes_.at(id);
  if (node.op != Op::Lookup)
    throw ValidationError("node '" + node.name + "' is not a lookup");
  node.row = row;
}

const Tensor& ComputeGraph::value(int id) const { return nodes_.at(id).val; }

void ComputeGraph::forward(const ParamStore& ps) {
  for (Node& node : nodes_) {
    switch (node.op) {
      case Op::Input:
        if (!node.bound)
          throw ValidationError("input '" + node.name + "' is unbound");
        break;
      case Op::Param:
        break;
      case Op::Affine: {
        const Node& nx = nodes_[node.in[0]];
        const Tensor& W = ps.value[nodes_[node.in[1]].param];
        const Tensor& b = ps.value[nodes_[node.in[2]].param];
        const double* x = nx.val.data();
        int out = W.shape[0], in = W.shape[1];
        for (int j = 0; j < out; ++j) {
          const double* wj = W.data() + static_cast<std::size_t>(j) * in;
          // four fixed-order partial sums; breaks the FMA latency chain while
          // keeping the summation order deterministic
          double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
          int k = 0;
          for (; k + 4 <= in; k += 4) {
            a0 += wj[k] * x[k];
            a1 += wj[k + 1] * x[k + 1];
            a2 += wj[k + 2] * x[k + 2];
            a3 += wj[k + 3] * x[k + 3];
          }
          double acc = b[j] + ((a0 + a1) + (a2 + a3));
          for (; k < in; ++k) acc += wj[k] * x[k];
          node.val[j] = acc;
        }
        break;
      }
      case Op::Relu: {
        const Tensor& x = nodes_[node.in[0]].val;
        for (std::size_t i = 0; i < x.size(); ++i)
          node.val[i] = x[i] > 0.0 ? x[i] : 0.0;
        break;
      }
      case Op::Sigmoid: {
        const Tensor& x = nodes_[node.in[0]].val;
        for (std::size_t i = 0; i < x.size(); ++i)
          node.val[i] = 1.0 / (1.0 + std::exp(-x[i]));
        break;
      }
      case Op::Softmax: {
        const Tensor& x = nodes_[node.in[0]].val;
        double m = x[0];
        for (std::size_t i = 1; i < x.size(); ++i) m = std::max(m, x[i]);
        double z = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          node.val[i] = std::exp(x[i] - m);
          z += node.val[i];
        }
        for (std::size_t i = 0; i < x.size(); ++i) node.val[i] /= z;
        break;
      }
      case Op::Concat: {
        std::size_t o = 0;
        for (int xi : node.in) {
          const Tensor& x = nodes_[xi].val;
          std::copy(x.v.begin(), x.v.end(), node.val.v.begin() + o);
          o += x.size();
        }
        break;
      }
      case Op::Lookup: {
        const Node& nm = nodes_[node.in[0]];
        const Tensor& M = ps.value[nm.param];
        if (node.row < 0 || node.row >= M.shape[0])
          throw ValidationError("lookup '" + node.name + "': row " +
                                std::to_string(node.row) + " out of range");
        const double* src = M.data() + static_cast<std::size_t>(node.row) * M.shape[1];
        std::copy(src, src + M.shape[1], node.val.v.begin());
        break;
      }
    }
  }
}

void ComputeGraph::backward(ParamStore& ps, int out, const double* dout) {
  backward(ps, ps.grad, {{out, dout}});
}

void ComputeGraph::backward(const ParamStore& ps, std::vector<Tensor>& grads, int out,
                            const double* dout) {
  backward(ps, grads, {{out, dout}});
}

void ComputeGraph::backward(const ParamStore& ps, std::vector<Tensor>& grads,
                            const std::vector<std::pair<int, const double*>>& seeds) {
  for (Node& node : nodes_) node.grad.zero();
  for (const auto& [id, dout] : seeds) {
    Node& node = nodes_.at(id);
    for (std::size_t i = 0; i < node.grad.size(); ++i) node.grad[i] += dout[i];
  }
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& node = nodes_[id];
    switch (node.op) {
      case Op::Input:
      case Op::Param:
        break;
      case Op::Affine: {
        Node& nx = nodes_[node.in[0]];
        int wp = nodes_[node.in[1]].param;
        int bp = nodes_[node.in[2]].param;
        const Tensor& W = ps.value[wp];
        Tensor& dW = grads[wp];
        Tensor& db = grads[bp];
        const double* x = nx.val.data();
        const double* dy = node.grad.data();
        int out = W.shape[0], in = W.shape[1];
        bool need_dx = nx.op != Op::Input;
        double* dx = nx.grad.data();
        for (int j = 0; j < out; ++j) {
          double dyj = dy[j];
          db[j] += dyj;
          double* dwj = dW.data() + static_cast<std::size_t>(j) * in;
          for (int k = 0; k < in; ++k) dwj[k] += dyj * x[k];
          if (need_dx) {
            const double* wj = W.data() + static_cast<std::size_t>(j) * in;
            for (int k = 0; k < in; ++k) dx[k] += dyj * wj[k];
          }
        }
        break;
      }
      case Op::Relu: {
        Node& nx = nodes_[node.in[0]];
        for (std::size_t i = 0; i < node.grad.size(); ++i)
          if (nx.val[i] > 0.0) nx.grad[i] += node.grad[i];
        break;
      }
      case Op::Sigmoid: {
        Node& nx = nodes_[node.in[0]];
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
          double y = node.val[i];
          nx.grad[i] += node.grad[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::Softmax: {
        Node& nx = nodes_[node.in[0]];
        double dot = 0.0;
        for (std::size_t i = 0; i < node.grad.size(); ++i)
          dot += node.grad[i] * node.val[i];
        for (std::size_t i = 0; i < node.grad.size(); ++i)
          nx.grad[i] += node.val[i] * (node.grad[i] - dot);
        break;
      }
      case Op::Concat: {
        std::size_t o = 0;
        for (int xi : node.in) {
          Node& nx = nodes_[xi];
          for (std::size_t i = 0; i < nx.grad.size(); ++i)
            nx.grad[i] += node.grad[o + i];
          o += nx.grad.size();
        }
        break;
      }
      case Op::Lookup: {
        int mp = nodes_[node.in[0]].param;
        Tensor& dM = grads[mp];
        double* dst = dM.data() + static_cast<std::size_t>(node.row) * dM.shape[1];
        for (std::size_t i = 0; i < node.grad.size(); ++i) dst[i] += node.grad[i];
        break;
      }
    }
  }
}

double finite_difference_check(ComputeGraph& g, ParamStore& ps, int out, double h) {
  if (g.value(out).size() != 1)
    throw ValidationError("finite-difference check needs a scalar output node");
  g.forward(ps);
  ps.zero_grad();
  double one = 1.0;
  g.backward(ps, out, &one);
  std::vector<Tensor> analytic = ps.grad;

  double worst = 0.0;
  for (std::size_t t = 0; t < ps.value.size(); ++t) {
    for (std::size_t i = 0; i < ps.value[t].size(); ++i) {
      double keep = ps.value[t][i];
      ps.value[t][i] = keep + h;
      g.forward(ps);
      double fp = g.value(out)[0];
      ps.value[t][i] = keep - h;
      g.forward(ps);
      double fm = g.value(out)[0];
      ps.value[t][i] = keep;
      double fd = (fp - fm) / (2.0 * h);
      double err = std::abs(analytic[t][i] - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, err);
    }
  }
  g.forward(ps);  // restore activations
  return worst;
}

}  // namespace deepstruct
