#include <doctest.h>

#include <string>

#include "deepstruct/config.hpp"

using namespace deepstruct;

namespace {

const char* kMinimal = "[graph]\nvariables = 3\ncardinality = 4\n";

void expect_error(const std::string& text, const std::string& fragment) {
  CHECK_THROWS_WITH_AS(parse_config(text), doctest::Contains(fragment.c_str()),
                       ConfigError);
}

}  // namespace

TEST_CASE("a minimal document exposes every documented default") {
  ConfigDoc d = parse_config(kMinimal);
  CHECK_FALSE(d.network_given);
  CHECK(d.graph.variables == 3);
  CHECK(d.graph.cardinality == 4);
  CHECK(d.graph.order == 1);
  CHECK_FALSE(d.graph.explicit_regions);
  CHECK(d.graph.c_unary == 1.0);
  CHECK(d.graph.c_pair1 == 1.0);
  CHECK(d.graph.c_pair2 == 1.0);
  CHECK(d.graph.pairwise == GraphSpec::Pairwise::Linear);
  CHECK(d.graph.pairwise_hidden == 32);

  CHECK(d.train.algo == TrainConfig::Algo::Blended);
  CHECK(d.train.epsilon == 1.0);
  CHECK(d.train.step_size == 0.01);
  CHECK(d.train.momentum == 0.95);
  CHECK(d.train.batch_size == 100);
  CHECK(d.train.max_iterations == 1000);
  CHECK(d.train.sweeps == 10);
  CHECK(d.train.step_decay == 0.5);
  CHECK(d.train.strategy == TrainConfig::Strategy::Joint);
  CHECK(d.train.loss_weight == 0.0);
  CHECK(d.train.seed == 1);
  CHECK(d.train.pretrain_iterations == 5000);
  CHECK(d.train.joint_step_size == 0.001);
  CHECK(d.train.val_interval == 100);

  CHECK(d.data.train_samples == 1000);
  CHECK(d.data.val_samples == 200);
  CHECK(d.data.test_samples == 200);
  CHECK(d.data.rotation == 25.0);
  CHECK(d.data.scale_min == 0.8);
  CHECK(d.data.scale_max == 1.2);
  CHECK(d.data.translation == 3.0);
  CHECK(d.data.noise == 0.15);
  CHECK(d.data.background == DataSpec::Background::Texture);
  CHECK(d.data.seed == 1);
  CHECK(d.data.words.empty());
  CHECK(d.data.height == 28);
  CHECK(d.data.width == 28);
}

TEST_CASE("comments, blank lines and whitespace are tolerated") {
  ConfigDoc d = parse_config(
      "# leading comment\n"
      "\n"
      "[graph]   \n"
      "  variables   =  5   # five slots\n"
      "cardinality=26\n");
  CHECK(d.graph.variables == 5);
  CHECK(d.graph.cardinality == 26);
}

TEST_CASE("structural problems report their source line") {
  expect_error("[graph\nvariables = 2\ncardinality = 2\n", "line 1: malformed section header");
  expect_error("[workout]\n", "line 1: unknown section [workout]");
  expect_error("[graph]\ncardinality = 2\nvariables = 2\n[graph]\n", "line 4: duplicate section");
  expect_error("variables = 2\n", "line 1: 'key = value' before any [section]");
  expect_error("[graph]\nvariables\n", "line 2: expected 'key = value'");
  expect_error("[graph]\nvariables =\n", "line 2: missing value for 'variables'");
  expect_error("[train]\nseed = 1\n", "missing required section [graph]");
  expect_error(std::string(kMinimal) + "[train]\nwarmup = 3\n", "line 5: unknown key 'warmup'");
  expect_error("[graph]\nvariables = 2\nvariables = 3\ncardinality = 2\n",
               "line 3: duplicate key 'variables' (first on line 2)");
}

TEST_CASE("graph section bounds are enforced") {
  expect_error("[graph]\nvariables = 1\ncardinality = 3\n", "variables must be at least 2");
  expect_error("[graph]\nvariables = 3\ncardinality = 1\n", "cardinality must be at least 2");
  expect_error("[graph]\nvariables = 3\ncardinality = 3\norder = 3\n", "order must be 1 or 2");
  expect_error("[graph]\nvariables = 3\ncardinality = 3\npairwise = cubic\n",
               "pairwise must be linear or mlp");
  expect_error("[graph]\nvariables = 3\ncardinality = 3\nregion = 0 0\n",
               "region repeats a variable");
  expect_error("[graph]\nvariables = 4\ncardinality = 3\nregion = 0 1 2\n",
               "regions larger than 2 variables are not supported");
  expect_error("[graph]\nvariables = 3\ncardinality = 3\nregion = 0 7\n",
               "region variable out of range");
}

TEST_CASE("train section bounds are enforced") {
  auto with_train = [](const std::string& kv) {
    return std::string(kMinimal) + "[train]\n" + kv + "\n";
  };
  expect_error(with_train("algo = annealed"), "algo must be blended or doubleloop");
  expect_error(with_train("epsilon = -0.5"), "epsilon must be nonnegative");
  expect_error(with_train("step_size = 0"), "step_size must be positive");
  expect_error(with_train("momentum = 1"), "momentum must be in [0, 1)");
  expect_error(with_train("batch_size = 0"), "batch_size must be at least 1");
  expect_error(with_train("sweeps = -1"), "sweeps must be nonnegative");
  expect_error(with_train("step_decay = 1.5"), "step_decay must be in (0, 1]");
  expect_error(with_train("strategy = solo"),
               "strategy must be unary, joint, pw or pretrain_joint");
  expect_error(with_train("loss_weight = -1"), "loss_weight must be nonnegative");
  expect_error(with_train("val_interval = 0"), "val_interval must be at least 1");
}

TEST_CASE("data section bounds are enforced") {
  auto with_data = [](const std::string& kv) {
    return std::string(kMinimal) + "[data]\n" + kv + "\n";
  };
  expect_error(with_data("rotation = -5"), "rotation must be nonnegative");
  expect_error(with_data("scale_min = 0\nscale_max = 1"),
               "scale range must satisfy 0 < scale_min <= scale_max");
  expect_error(with_data("background = plaid"), "background must be blank or texture");
  expect_error(with_data("word = ab\nword = abc"), "vocabulary words must share one length");
  expect_error(with_data("word = aB"), "word must be lowercase a-z");
}

TEST_CASE("network grammar accepts the full node set") {
  ConfigDoc d = parse_config(
      "[network]\n"
      "input = pix 10\n"
      "node = e lookup M:4x6\n"
      "node = h affine pix W1:8x10 b1:8\n"
      "node = hr relu h\n"
      "node = hs sigmoid hr\n"
      "node = cat concat hs e\n"
      "node = sm softmax cat\n"
      "node = scores affine sm W2:3x14 b2:3\n"
      "output = scores\n"
      "[graph]\n"
      "variables = 2\n"
      "cardinality = 3\n");
  CHECK(d.network_given);
  CHECK(d.network.input_name == "pix");
  CHECK(d.network.input_dim == 10);
  REQUIRE(d.network.nodes.size() == 7);
  CHECK(d.network.nodes[0].kind == "lookup");
  CHECK(d.network.nodes[4].inputs == std::vector<std::string>{"hs", "e"});
  CHECK(d.network.nodes[6].params[0].shape == std::vector<int>{3, 14});
  CHECK(d.network.output_name == "scores");
}

TEST_CASE("network declarations are validated eagerly") {
  auto net = [](const std::string& body) {
    return "[network]\n" + body + "[graph]\nvariables = 2\ncardinality = 3\n";
  };
  expect_error(net("input = x 6\nnode = s affine x W:3x6\noutput = s\n"),
               "affine node needs '<input> W:RxC b:R'");
  expect_error(net("input = x 6\nnode = s twist x\noutput = s\n"),
               "unknown node kind 'twist'");
  expect_error(net("input = x 6\nnode = s affine x W3x6 b:3\noutput = s\n"),
               "parameter must be written name:dims");
  expect_error(net("input = x 6\nnode = s affine x W:0x6 b:0\noutput = s\n"),
               "needs positive dimensions");
  expect_error(net("input = x 6\nnode = s affine ghost W:3x6 b:3\noutput = s\n"),
               "references unknown node 'ghost'");
  expect_error(net("input = x 6\nnode = s affine x W:3x5 b:3\noutput = s\n"),
               "W columns 5 do not match input size 6");
  expect_error(net("input = x 6\nnode = s affine x W:3x6 b:4\noutput = s\n"),
               "bias size must match W rows");
  expect_error(net("input = x 6\nnode = s affine x W:3x6 b:3\noutput = t\n"),
               "output references unknown node 't'");
  expect_error(net("input = x 6\nnode = x affine x W:3x6 b:3\noutput = x\n"),
               "duplicate node name 'x'");
  expect_error(
      net("input = x 6\nnode = s affine x W:3x6 b:3\nnode = t affine s W:2x3 b:2\noutput = t\n"),
      "parameter 'W' declared twice");
  expect_error(net("node = s affine x W:3x6 b:3\noutput = s\n"),
               "[network] needs an input declaration");
  expect_error(net("input = x 6\nnode = s affine x W:3x6 b:3\n"),
               "[network] needs an output declaration");
}

TEST_CASE("serialization is a canonical fixed point with a stable hash") {
  ConfigDoc d1 = parse_config(
      "[graph]\n"
      "cardinality = 5\n"
      "variables = 4\n"
      "order = 2\n"
      "[data]\n"
      "word = abc\n"
      "word = cba\n"
      "[train]\n"
      "epsilon = 0.25\n"
      "strategy = pw\n");
  std::string text = serialize_config(d1);
  ConfigDoc d2 = parse_config(text);
  CHECK(serialize_config(d2) == text);
  CHECK(config_hash(d1) == config_hash(d2));

  // every effective setting surfaces in the canonical text
  CHECK(text.find("epsilon = 0.25") != std::string::npos);
  CHECK(text.find("strategy = pw") != std::string::npos);
  CHECK(text.find("order = 2") != std::string::npos);
  CHECK(text.find("word = abc") != std::string::npos);
}

TEST_CASE("the hash reacts to any semantic change") {
  ConfigDoc base = parse_config(kMinimal);
  std::uint64_t h0 = config_hash(base);
  CHECK(config_hash(parse_config(kMinimal)) == h0);

  ConfigDoc eps = base;
  eps.train.epsilon = 0.5;
  CHECK(config_hash(eps) != h0);
  ConfigDoc seed = base;
  seed.train.seed = 2;
  CHECK(config_hash(seed) != h0);
  ConfigDoc words = base;
  words.data.words = {"abcd"};
  CHECK(config_hash(words) != h0);
  ConfigDoc mlp = base;
  mlp.graph.pairwise = GraphSpec::Pairwise::Mlp;
  CHECK(config_hash(mlp) != h0);
}

TEST_CASE("the default network is one hidden relu layer sized for the alphabet") {
  NetworkSpec n = default_network(12, 7, 4);
  REQUIRE(n.nodes.size() == 3);
  CHECK(n.input_dim == 12);
  CHECK(n.nodes[0].kind == "affine");
  CHECK(n.nodes[0].params[0].shape == std::vector<int>{7, 12});
  CHECK(n.nodes[1].kind == "relu");
  CHECK(n.nodes[2].params[0].shape == std::vector<int>{4, 7});
  CHECK(n.nodes[2].params[1].shape == std::vector<int>{4});
  CHECK(n.output_name == "scores");

  ConfigDoc d = parse_config(kMinimal);
  NetworkSpec eff = effective_network(d);
  CHECK(eff.input_dim == 784);
  CHECK(eff.nodes[0].params[0].shape == std::vector<int>{128, 784});
  CHECK(eff.nodes[2].params[0].shape == std::vector<int>{4, 128});
}

TEST_CASE("explicit regions switch the graph spec out of chain mode") {
  ConfigDoc d = parse_config(
      "[graph]\n"
      "variables = 4\n"
      "cardinality = 3\n"
      "region = 0 1\n"
      "region = 2\n"
      "region = 1 3\n");
  CHECK(d.graph.explicit_regions);
  REQUIRE(d.graph.regions.size() == 3);
  CHECK(d.graph.regions[0] == std::vector<int>{0, 1});
  CHECK(d.graph.regions[1] == std::vector<int>{2});
  CHECK(d.graph.regions[2] == std::vector<int>{1, 3});
}
