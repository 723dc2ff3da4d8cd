#include "deepstruct/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <map>
#include <sstream>

#include "deepstruct/checksum.hpp"

namespace deepstruct {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

long long parse_ll(const std::string& v, const std::string& key, int line) {
  long long x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("value for '" + key + "' is not an integer: '" + v + "'", line);
  return x;
}

int parse_int(const std::string& v, const std::string& key, int line) {
  long long x = parse_ll(v, key, line);
  if (x < -2000000000LL || x > 2000000000LL)
    throw ConfigError("value for '" + key + "' is out of range", line);
  return static_cast<int>(x);
}

std::uint64_t parse_u64(const std::string& v, const std::string& key, int line) {
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("value for '" + key + "' is not a nonnegative integer: '" + v + "'",
                      line);
  return x;
}

double parse_double(const std::string& v, const std::string& key, int line) {
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || v.empty())
    throw ConfigError("value for '" + key + "' is not a number: '" + v + "'", line);
  return x;
}

std::string fmt(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  (void)ec;
  return std::string(buf, p);
}

// "name:RxC" or "name:R"
ParamDecl parse_param_decl(const std::string& tok, int line) {
  std::size_t colon = tok.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size())
    throw ConfigError("parameter must be written name:dims, got '" + tok + "'", line);
  ParamDecl d;
  d.name = tok.substr(0, colon);
  std::string dims = tok.substr(colon + 1);
  std::size_t x = dims.find('x');
  auto one = [&](const std::string& s) {
    int v = parse_int(s, d.name, line);
    if (v <= 0) throw ConfigError("parameter '" + d.name + "' needs positive dimensions", line);
    return v;
  };
  if (x == std::string::npos) {
    d.shape = {one(dims)};
  } else {
    d.shape = {one(dims.substr(0, x)), one(dims.substr(x + 1))};
  }
  return d;
}

std::string param_decl_str(const ParamDecl& d) {
  std::string s = d.name + ":" + std::to_string(d.shape[0]);
  if (d.shape.size() > 1) s += "x" + std::to_string(d.shape[1]);
  return s;
}

struct RawEntry {
  std::string key, value;
  int line;
};

struct KeyTracker {
  std::map<std::string, int> seen;
  void once(const std::string& key, int line) {
    auto [it, fresh] = seen.emplace(key, line);
    if (!fresh)
      throw ConfigError("duplicate key '" + key + "' (first on line " +
                            std::to_string(it->second) + ")",
                        line);
  }
};

void check_network(const NetworkSpec& net, const std::vector<int>& node_lines) {
  std::map<std::string, int> known;  // name -> output dim (0 = unknown until link)
  known[net.input_name] = net.input_dim;
  std::map<std::string, bool> params_seen;
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    const NodeDecl& n = net.nodes[i];
    int line = node_lines[i];
    if (known.count(n.name))
      throw ConfigError("duplicate node name '" + n.name + "'", line);
    for (const auto& in : n.inputs)
      if (!known.count(in))
        throw ConfigError("node '" + n.name + "' references unknown node '" + in + "'",
                          line);
    for (const auto& p : n.params) {
      if (params_seen.count(p.name))
        throw ConfigError("parameter '" + p.name + "' declared twice", line);
      params_seen[p.name] = true;
    }
    int dim = 0;
    if (n.kind == "affine") {
      if (n.params[0].shape.size() != 2)
        throw ConfigError("affine node '" + n.name + "' needs a matrix W", line);
      if (n.params[0].shape[1] != known[n.inputs[0]])
        throw ConfigError("affine node '" + n.name + "': W columns " +
                              std::to_string(n.params[0].shape[1]) +
                              " do not match input size " +
                              std::to_string(known[n.inputs[0]]),
                          line);
      if (n.params[1].shape.size() != 1 || n.params[1].shape[0] != n.params[0].shape[0])
        throw ConfigError("affine node '" + n.name + "': bias size must match W rows", line);
      dim = n.params[0].shape[0];
    } else if (n.kind == "relu" || n.kind == "sigmoid" || n.kind == "softmax") {
      dim = known[n.inputs[0]];
    } else if (n.kind == "concat") {
      for (const auto& in : n.inputs) dim += known[in];
    } else if (n.kind == "lookup") {
      if (n.params[0].shape.size() != 2)
        throw ConfigError("lookup node '" + n.name + "' needs a matrix parameter", line);
      dim = n.params[0].shape[1];
    }
    known[n.name] = dim;
  }
  if (!known.count(net.output_name) || net.output_name == net.input_name)
    throw ConfigError("output references unknown node '" + net.output_name + "'");
}

}  // namespace

NetworkSpec default_network(int input_dim, int hidden, int k) {
  NetworkSpec net;
  net.input_name = "x";
  net.input_dim = input_dim;
  net.output_name = "scores";
  NodeDecl h1{"h1", "affine", {"x"},
              {{"unary.W1", {hidden, input_dim}}, {"unary.b1", {hidden}}}};
  NodeDecl r1{"r1", "relu", {"h1"}, {}};
  NodeDecl sc{"scores", "affine", {"r1"},
              {{"unary.W2", {k, hidden}}, {"unary.b2", {k}}}};
  net.nodes = {h1, r1, sc};
  return net;
}

NetworkSpec effective_network(const ConfigDoc& doc) {
  if (doc.network_given) return doc.network;
  return default_network(784, 128, doc.graph.cardinality);
}

ConfigDoc parse_config(const std::string& text) {
  ConfigDoc doc;
  std::map<std::string, std::vector<RawEntry>> sections;
  std::map<std::string, int> section_lines;

  std::istringstream is(text);
  std::string raw;
  std::string cur;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("malformed section header '" + line + "'", line_no);
      cur = line.substr(1, line.size() - 2);
      if (cur != "network" && cur != "graph" && cur != "train" && cur != "data")
        throw ConfigError("unknown section [" + cur + "]", line_no);
      auto [it, fresh] = section_lines.emplace(cur, line_no);
      if (!fresh)
        throw ConfigError("duplicate section [" + cur + "]", line_no);
      sections[cur];
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
    if (cur.empty())
      throw ConfigError("'key = value' before any [section]", line_no);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line_no);
    if (value.empty()) throw ConfigError("missing value for '" + key + "'", line_no);
    sections[cur].push_back({key, value, line_no});
  }

  if (!sections.count("graph"))
    throw ConfigError("missing required section [graph]");

  // ---- [network] ----
  if (sections.count("network")) {
    doc.network_given = true;
    NetworkSpec& net = doc.network;
    net.nodes.clear();
    std::vector<int> node_lines;
    KeyTracker tracker;
    bool have_input = false, have_output = false;
    for (const auto& e : sections["network"]) {
      if (e.key == "input") {
        tracker.once("input", e.line);
        auto toks = split_ws(e.value);
        if (toks.size() != 2)
          throw ConfigError("input must be '<name> <size>'", e.line);
        net.input_name = toks[0];
        net.input_dim = parse_int(toks[1], "input", e.line);
        if (net.input_dim <= 0)
          throw ConfigError("input size must be positive", e.line);
        have_input = true;
      } else if (e.key == "output") {
        tracker.once("output", e.line);
        net.output_name = e.value;
        have_output = true;
      } else if (e.key == "node") {
        auto toks = split_ws(e.value);
        if (toks.size() < 3)
          throw ConfigError("node must be '<name> <kind> <args...>'", e.line);
        NodeDecl n;
        n.name = toks[0];
        n.kind = toks[1];
        if (n.kind == "affine") {
          if (toks.size() != 5)
            throw ConfigError("affine node needs '<input> W:RxC b:R'", e.line);
          n.inputs = {toks[2]};
          n.params = {parse_param_decl(toks[3], e.line), parse_param_decl(toks[4], e.line)};
        } else if (n.kind == "relu" || n.kind == "sigmoid" || n.kind == "softmax") {
          if (toks.size() != 3)
            throw ConfigError(n.kind + " node takes exactly one input", e.line);
          n.inputs = {toks[2]};
        } else if (n.kind == "concat") {
          n.inputs.assign(toks.begin() + 2, toks.end());
        } else if (n.kind == "lookup") {
          if (toks.size() != 3)
            throw ConfigError("lookup node needs 'M:RxC'", e.line);
          n.params = {parse_param_decl(toks[2], e.line)};
        } else {
          throw ConfigError("unknown node kind '" + n.kind + "'", e.line);
        }
        net.nodes.push_back(std::move(n));
        node_lines.push_back(e.line);
      } else {
        throw ConfigError("unknown key '" + e.key + "' in [network]", e.line);
      }
    }
    if (!have_input)
      throw ConfigError("[network] needs an input declaration", section_lines["network"]);
    if (!have_output)
      throw ConfigError("[network] needs an output declaration", section_lines["network"]);
    if (net.nodes.empty())
      throw ConfigError("[network] declares no nodes", section_lines["network"]);
    check_network(net, node_lines);
  }

  // ---- [graph] ----
  {
    GraphSpec& g = doc.graph;
    KeyTracker tracker;
    int order_line = 0;
    for (const auto& e : sections["graph"]) {
      if (e.key == "variables") {
        tracker.once(e.key, e.line);
        g.variables = parse_int(e.value, e.key, e.line);
        if (g.variables < 2)
          throw ConfigError("variables must be at least 2", e.line);
      } else if (e.key == "cardinality") {
        tracker.once(e.key, e.line);
        g.cardinality = parse_int(e.value, e.key, e.line);
        if (g.cardinality < 2)
          throw ConfigError("cardinality must be at least 2", e.line);
      } else if (e.key == "order") {
        tracker.once(e.key, e.line);
        g.order = parse_int(e.value, e.key, e.line);
        if (g.order != 1 && g.order != 2)
          throw ConfigError("order must be 1 or 2", e.line);
        order_line = e.line;
      } else if (e.key == "c_unary") {
        tracker.once(e.key, e.line);
        g.c_unary = parse_double(e.value, e.key, e.line);
      } else if (e.key == "c_pair1") {
        tracker.once(e.key, e.line);
        g.c_pair1 = parse_double(e.value, e.key, e.line);
      } else if (e.key == "c_pair2") {
        tracker.once(e.key, e.line);
        g.c_pair2 = parse_double(e.value, e.key, e.line);
      } else if (e.key == "pairwise") {
        tracker.once(e.key, e.line);
        if (e.value == "linear")
          g.pairwise = GraphSpec::Pairwise::Linear;
        else if (e.value == "mlp")
          g.pairwise = GraphSpec::Pairwise::Mlp;
        else
          throw ConfigError("pairwise must be linear or mlp", e.line);
      } else if (e.key == "pairwise_hidden") {
        tracker.once(e.key, e.line);
        g.pairwise_hidden = parse_int(e.value, e.key, e.line);
        if (g.pairwise_hidden < 1)
          throw ConfigError("pairwise_hidden must be positive", e.line);
      } else if (e.key == "region") {
        g.explicit_regions = true;
        auto toks = split_ws(e.value);
        if (toks.empty())
          throw ConfigError("region needs at least 1 variable", e.line);
        std::vector<int> scope;
        for (const auto& t : toks) scope.push_back(parse_int(t, e.key, e.line));
        std::sort(scope.begin(), scope.end());
        if (std::adjacent_find(scope.begin(), scope.end()) != scope.end())
          throw ConfigError("region repeats a variable", e.line);
        if (scope.size() > 2)
          throw ConfigError("regions larger than 2 variables are not supported", e.line);
        g.regions.push_back(std::move(scope));
      } else {
        throw ConfigError("unknown key '" + e.key + "' in [graph]", e.line);
      }
    }
    if (g.explicit_regions && order_line > 0)
      throw ConfigError("order and explicit region entries are mutually exclusive",
                        order_line);
    if (!g.explicit_regions && g.order == 2 && g.variables < 3)
      throw ConfigError("order 2 needs at least 3 variables",
                        section_lines["graph"]);
    for (const auto& scope : g.regions)
      for (int v : scope)
        if (v < 0 || v >= g.variables)
          throw ConfigError("region variable out of range", section_lines["graph"]);
  }

  // ---- [train] ----
  if (sections.count("train")) {
    TrainConfig& t = doc.train;
    KeyTracker tracker;
    for (const auto& e : sections["train"]) {
      tracker.once(e.key, e.line);
      if (e.key == "algo") {
        if (e.value == "blended")
          t.algo = TrainConfig::Algo::Blended;
        else if (e.value == "doubleloop")
          t.algo = TrainConfig::Algo::DoubleLoop;
        else
          throw ConfigError("algo must be blended or doubleloop", e.line);
      } else if (e.key == "epsilon") {
        t.epsilon = parse_double(e.value, e.key, e.line);
        if (t.epsilon < 0)
          throw ConfigError("epsilon must be nonnegative", e.line);
      } else if (e.key == "step_size") {
        t.step_size = parse_double(e.value, e.key, e.line);
        if (t.step_size <= 0)
          throw ConfigError("step_size must be positive", e.line);
      } else if (e.key == "momentum") {
        t.momentum = parse_double(e.value, e.key, e.line);
        if (t.momentum < 0 || t.momentum >= 1)
          throw ConfigError("momentum must be in [0, 1)", e.line);
      } else if (e.key == "batch_size") {
        t.batch_size = parse_int(e.value, e.key, e.line);
        if (t.batch_size < 1)
          throw ConfigError("batch_size must be at least 1", e.line);
      } else if (e.key == "max_iterations") {
        t.max_iterations = parse_int(e.value, e.key, e.line);
        if (t.max_iterations < 0)
          throw ConfigError("max_iterations must be nonnegative", e.line);
      } else if (e.key == "sweeps") {
        t.sweeps = parse_int(e.value, e.key, e.line);
        if (t.sweeps < 0)
          throw ConfigError("sweeps must be nonnegative", e.line);
      } else if (e.key == "step_decay") {
        t.step_decay = parse_double(e.value, e.key, e.line);
        if (t.step_decay <= 0 || t.step_decay > 1)
          throw ConfigError("step_decay must be in (0, 1]", e.line);
      } else if (e.key == "strategy") {
        if (e.value == "unary")
          t.strategy = TrainConfig::Strategy::UnaryOnly;
        else if (e.value == "joint")
          t.strategy = TrainConfig::Strategy::Joint;
        else if (e.value == "pw")
          t.strategy = TrainConfig::Strategy::PwTrain;
        else if (e.value == "pretrain_joint")
          t.strategy = TrainConfig::Strategy::PretrainJoint;
        else
          throw ConfigError("strategy must be unary, joint, pw or pretrain_joint", e.line);
      } else if (e.key == "loss_weight") {
        t.loss_weight = parse_double(e.value, e.key, e.line);
        if (t.loss_weight < 0)
          throw ConfigError("loss_weight must be nonnegative", e.line);
      } else if (e.key == "seed") {
        t.seed = parse_u64(e.value, e.key, e.line);
      } else if (e.key == "pretrain_iterations") {
        t.pretrain_iterations = parse_int(e.value, e.key, e.line);
        if (t.pretrain_iterations < 0)
          throw ConfigError("pretrain_iterations must be nonnegative", e.line);
      } else if (e.key == "joint_step_size") {
        t.joint_step_size = parse_double(e.value, e.key, e.line);
        if (t.joint_step_size <= 0)
          throw ConfigError("joint_step_size must be positive", e.line);
      } else if (e.key == "val_interval") {
        t.val_interval = parse_int(e.value, e.key, e.line);
        if (t.val_interval < 1)
          throw ConfigError("val_interval must be at least 1", e.line);
      } else {
        throw ConfigError("unknown key '" + e.key + "' in [train]", e.line);
      }
    }
  }

  // ---- [data] ----
  if (sections.count("data")) {
    DataSpec& d = doc.data;
    KeyTracker tracker;
    for (const auto& e : sections["data"]) {
      if (e.key == "word") {
        for (char ch : e.value)
          if (ch < 'a' || ch > 'z')
            throw ConfigError("word must be lowercase a-z: '" + e.value + "'", e.line);
        d.words.push_back(e.value);
        continue;
      }
      tracker.once(e.key, e.line);
      if (e.key == "train_samples") {
        d.train_samples = parse_int(e.value, e.key, e.line);
      } else if (e.key == "val_samples") {
        d.val_samples = parse_int(e.value, e.key, e.line);
      } else if (e.key == "test_samples") {
        d.test_samples = parse_int(e.value, e.key, e.line);
      } else if (e.key == "rotation") {
        d.rotation = parse_double(e.value, e.key, e.line);
        if (d.rotation < 0) throw ConfigError("rotation must be nonnegative", e.line);
      } else if (e.key == "scale_min") {
        d.scale_min = parse_double(e.value, e.key, e.line);
      } else if (e.key == "scale_max") {
        d.scale_max = parse_double(e.value, e.key, e.line);
      } else if (e.key == "translation") {
        d.translation = parse_double(e.value, e.key, e.line);
        if (d.translation < 0)
          throw ConfigError("translation must be nonnegative", e.line);
      } else if (e.key == "noise") {
        d.noise = parse_double(e.value, e.key, e.line);
        if (d.noise < 0) throw ConfigError("noise must be nonnegative", e.line);
      } else if (e.key == "background") {
        if (e.value == "blank")
          d.background = DataSpec::Background::Blank;
        else if (e.value == "texture")
          d.background = DataSpec::Background::Texture;
        else
          throw ConfigError("background must be blank or texture", e.line);
      } else if (e.key == "seed") {
        d.seed = parse_u64(e.value, e.key, e.line);
      } else {
        throw ConfigError("unknown key '" + e.key + "' in [data]", e.line);
      }
    }
    if (d.train_samples < 0 || d.val_samples < 0 || d.test_samples < 0)
      throw ConfigError("sample counts must be nonnegative",
                        section_lines["data"]);
    if (d.scale_min <= 0 || d.scale_max < d.scale_min)
      throw ConfigError("scale range must satisfy 0 < scale_min <= scale_max",
                        section_lines["data"]);
    if (!d.words.empty()) {
      std::size_t len = d.words.front().size();
      for (const auto& w : d.words)
        if (w.size() != len)
          throw ConfigError("vocabulary words must share one length",
                            section_lines["data"]);
    }
  }

  return doc;
}

std::string serialize_config(const ConfigDoc& doc) {
  std::ostringstream os;
  NetworkSpec net = effective_network(doc);
  os << "[network]\n";
  os << "input = " << net.input_name << " " << net.input_dim << "\n";
  for (const auto& n : net.nodes) {
    os << "node = " << n.name << " " << n.kind;
    for (const auto& in : n.inputs) os << " " << in;
    for (const auto& p : n.params) os << " " << param_decl_str(p);
    os << "\n";
  }
  os << "output = " << net.output_name << "\n";

  const GraphSpec& g = doc.graph;
  os << "\n[graph]\n";
  os << "variables = " << g.variables << "\n";
  os << "cardinality = " << g.cardinality << "\n";
  if (g.explicit_regions) {
    for (const auto& scope : g.regions) {
      os << "region =";
      for (int v : scope) os << " " << v;
      os << "\n";
    }
  } else {
    os << "order = " << g.order << "\n";
  }
  os << "c_unary = " << fmt(g.c_unary) << "\n";
  os << "c_pair1 = " << fmt(g.c_pair1) << "\n";
  os << "c_pair2 = " << fmt(g.c_pair2) << "\n";
  os << "pairwise = " << (g.pairwise == GraphSpec::Pairwise::Linear ? "linear" : "mlp")
     << "\n";
  os << "pairwise_hidden = " << g.pairwise_hidden << "\n";

  const TrainConfig& t = doc.train;
  os << "\n[train]\n";
  os << "algo = " << (t.algo == TrainConfig::Algo::Blended ? "blended" : "doubleloop")
     << "\n";
  os << "epsilon = " << fmt(t.epsilon) << "\n";
  os << "step_size = " << fmt(t.step_size) << "\n";
  os << "momentum = " << fmt(t.momentum) << "\n";
  os << "batch_size = " << t.batch_size << "\n";
  os << "max_iterations = " << t.max_iterations << "\n";
  os << "sweeps = " << t.sweeps << "\n";
  os << "step_decay = " << fmt(t.step_decay) << "\n";
  switch (t.strategy) {
    case TrainConfig::Strategy::UnaryOnly: os << "strategy = unary\n"; break;
    case TrainConfig::Strategy::Joint: os << "strategy = joint\n"; break;
    case TrainConfig::Strategy::PwTrain: os << "strategy = pw\n"; break;
    case TrainConfig::Strategy::PretrainJoint: os << "strategy = pretrain_joint\n"; break;
  }
  os << "loss_weight = " << fmt(t.loss_weight) << "\n";
  os << "seed = " << t.seed << "\n";
  os << "pretrain_iterations = " << t.pretrain_iterations << "\n";
  os << "joint_step_size = " << fmt(t.joint_step_size) << "\n";
  os << "val_interval = " << t.val_interval << "\n";

  const DataSpec& d = doc.data;
  os << "\n[data]\n";
  os << "train_samples = " << d.train_samples << "\n";
  os << "val_samples = " << d.val_samples << "\n";
  os << "test_samples = " << d.test_samples << "\n";
  os << "rotation = " << fmt(d.rotation) << "\n";
  os << "scale_min = " << fmt(d.scale_min) << "\n";
  os << "scale_max = " << fmt(d.scale_max) << "\n";
  os << "translation = " << fmt(d.translation) << "\n";
  os << "noise = " << fmt(d.noise) << "\n";
  os << "background = "
     << (d.background == DataSpec::Background::Blank ? "blank" : "texture") << "\n";
  os << "seed = " << d.seed << "\n";
  for (const auto& w : d.words) os << "word = " << w << "\n";
  return os.str();
}

std::uint64_t config_hash(const ConfigDoc& doc) {
  return fnv1a64(serialize_config(doc));
}

}  // namespace deepstruct
