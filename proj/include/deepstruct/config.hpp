#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepstruct/errors.hpp"

namespace deepstruct {

// Typed mirror of the INI config. Sections: [network] [graph] [train] [data].
// Only [graph] is required; everything else has defaults. serialize_config
// emits a fully explicit canonical form, so hashing the text fingerprints the
// complete effective configuration.

struct ParamDecl {
  std::string name;
  std::vector<int> shape;
};

struct NodeDecl {
  std::string name;
  std::string kind;  // affine | relu | sigmoid | softmax | concat | lookup
  std::vector<std::string> inputs;
  std::vector<ParamDecl> params;
};

struct NetworkSpec {
  std::string input_name = "x";
  int input_dim = 784;
  std::vector<NodeDecl> nodes;
  std::string output_name = "scores";
};

struct GraphSpec {
  enum class Pairwise { Linear, Mlp };
  int variables = 5;
  int cardinality = 26;
  int order = 1;  // ignored when explicit regions are given
  bool explicit_regions = false;
  std::vector<std::vector<int>> regions;
  double c_unary = 1.0;
  double c_pair1 = 1.0;
  double c_pair2 = 1.0;
  Pairwise pairwise = Pairwise::Linear;
  int pairwise_hidden = 32;
};

struct TrainConfig {
  enum class Algo { Blended, DoubleLoop };
  enum class Strategy { UnaryOnly, Joint, PwTrain, PretrainJoint };
  Algo algo = Algo::Blended;
  double epsilon = 1.0;
  double step_size = 0.01;
  double momentum = 0.95;
  int batch_size = 100;
  int max_iterations = 1000;
  int sweeps = 10;  // per weight update in doubleloop mode; blended always does 1
  double step_decay = 0.5;
  Strategy strategy = Strategy::Joint;
  double loss_weight = 0.0;
  std::uint64_t seed = 1;
  int pretrain_iterations = 5000;
  double joint_step_size = 0.001;  // phase-2 step size for pretrain_joint
  int val_interval = 100;
};

struct DataSpec {
  enum class Background { Blank, Texture };
  int train_samples = 1000;
  int val_samples = 200;
  int test_samples = 200;
  double rotation = 25.0;    // degrees, +/-
  double scale_min = 0.8;
  double scale_max = 1.2;
  double translation = 3.0;  // pixels, +/-
  double noise = 0.15;
  Background background = Background::Texture;
  std::uint64_t seed = 1;
  std::vector<std::string> words;  // empty = built-in 50-word vocabulary
  int height = 28;
  int width = 28;
};

struct ConfigDoc {
  bool network_given = false;  // false = default MLP derived from cardinality
  NetworkSpec network;
  GraphSpec graph;
  TrainConfig train;
  DataSpec data;
};

// Parses the INI text; throws ConfigError (with 1-based line numbers) on the
// first problem. Unknown sections/keys are errors.
ConfigDoc parse_config(const std::string& text);

// Canonical, fully explicit text form; parse_config(serialize_config(d)) is
// semantically identical to d.
std::string serialize_config(const ConfigDoc& doc);

// FNV-1a of the canonical form; stored in model files.
std::uint64_t config_hash(const ConfigDoc& doc);

// The default one-hidden-layer unary network: input_dim -> hidden -> k.
NetworkSpec default_network(int input_dim, int hidden, int k);

// The effective network: the declared one, or the default expanded for k.
NetworkSpec effective_network(const ConfigDoc& doc);

}  // namespace deepstruct
