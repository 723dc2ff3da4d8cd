#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "deepstruct/errors.hpp"
#include "deepstruct/rng.hpp"
#include "deepstruct/tensor.hpp"

namespace deepstruct {

// Named parameter tensors plus congruent gradient and momentum slots.
// Networks reference entries by index; two graph nodes naming the same tensor
// share it, and their gradients accumulate additively.
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Tensor> value;
  std::vector<Tensor> grad;
  std::vector<Tensor> vel;
  std::unordered_map<std::string, int> index;

  int add(const std::string& name, const std::vector<int>& shape);
  int find(const std::string& name) const;       // -1 when absent
  int require(const std::string& name) const;    // throws ValidationError
  void zero_grad();
  std::size_t total_size() const;

  // uniform [-s, s], s = sqrt(6 / (fan_in + fan_out)) for matrices; vectors
  // (biases) start at zero. Each tensor gets its own derived stream so the
  // result is independent of call order elsewhere.
  void init_params(std::uint64_t seed);
};

enum class Op { Input, Param, Affine, Relu, Sigmoid, Softmax, Concat, Lookup };

struct Node {
  Op op;
  std::string name;
  std::vector<int> in;   // upstream node ids
  int param = -1;        // Param nodes: index into the store
  int row = -1;          // Lookup nodes: row selected at run time
  bool bound = false;    // Input nodes: value supplied since last clear
  Tensor val;
  Tensor grad;
};

// Minimal reverse-mode DAG. Nodes are appended in topological order by
// construction (inputs must already exist), shapes are checked at build time,
// and errors name the offending node. Copyable so worker threads can own
// private activation buffers while sharing one ParamStore.
class ComputeGraph {
 public:
  int add_input(const std::string& name, int n);
  int add_param(const std::string& name, const ParamStore& ps);
  int add_affine(const std::string& name, int x, int w, int b);
  int add_relu(const std::string& name, int x);
  int add_sigmoid(const std::string& name, int x);
  int add_softmax(const std::string& name, int x);
  int add_concat(const std::string& name, const std::vector<int>& xs);
  int add_lookup(const std::string& name, int matrix);

  int find(const std::string& name) const;  // -1 when absent
  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_[id]; }

  void set_input(int id, const double* x, int n);
  void set_input(int id, const float* x, int n);
  void set_row(int id, int row);

  const Tensor& value(int id) const;

  void forward(const ParamStore& ps);

  // Accumulates d(sum_i dout[i] * out[i]) / dw. Parameter values are read
  // from ps; gradients go into the supplied sink (shape-congruent with the
  // store), so per-worker accumulators can run against one shared store.
  // Multiple (out, dout) seeds can be applied in one pass.
  void backward(ParamStore& ps, int out, const double* dout);
  void backward(const ParamStore& ps, std::vector<Tensor>& grads, int out,
                const double* dout);
  void backward(const ParamStore& ps, std::vector<Tensor>& grads,
                const std::vector<std::pair<int, const double*>>& seeds);

 private:
  int push(Node n);
  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> by_name_;
};

// Max over parameters of |analytic - central difference| / max(1, |central|)
// for a scalar output node. The workhorse behind gradient checking.
double finite_difference_check(ComputeGraph& g, ParamStore& ps, int out, double h);

}  // namespace deepstruct
