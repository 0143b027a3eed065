#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "evocell/arch.hpp"
#include "evocell/serialize.hpp"

using namespace evocell;

namespace {

bool has_violation(const ValidationReport& rep, const std::string& rule) {
  for (const auto& v : rep.violations)
    if (v.rule == rule) return true;
  return false;
}

std::size_t count_kind(const Architecture& a, BlockKind k) {
  std::size_t n = 0;
  for (const auto& [id, b] : a.blocks())
    if (b.kind == k) ++n;
  return n;
}

}  // namespace

TEST_CASE("seed encodings have the documented block counts") {
  CHECK(block_count(encode_basic_rnn()) == 10);
  CHECK(block_count(encode_lstm()) == 26);
  CHECK(block_count(encode_gru()) == 23);
}

TEST_CASE("seed encodings validate cleanly") {
  for (const Architecture& a : {encode_basic_rnn(), encode_lstm(), encode_gru()}) {
    ValidationReport rep = validate(a);
    INFO(a.identifier);
    CHECK(rep.ok());
  }
}

TEST_CASE("basic rnn structure") {
  BasicRnnLayout l;
  Architecture a = encode_basic_rnn(&l);
  CHECK(a.identifier == "BASIC_0");
  CHECK(a.at(a.output_h()).inputs == std::vector<BlockId>{l.tanh});
  CHECK(a.at(a.output_c()).inputs == std::vector<BlockId>{l.c_pass});
  CHECK(a.at(l.tanh).activation == ActivationFn::Tanh);
  CHECK(a.at(l.add).combination == CombinationFn::Add);
  CHECK(a.at(l.c_pass).activation == ActivationFn::Identity);
  CHECK(count_kind(a, BlockKind::Combination) == 1);
}

TEST_CASE("lstm structure") {
  LstmLayout l;
  Architecture a = encode_lstm(&l);
  CHECK(a.identifier == "LSTM_0");
  // Previous cell state feeds the forget product; new cell state feeds both
  // outputs' paths.
  CHECK(a.consumers(l.c) == std::vector<BlockId>{l.fc});
  CHECK(a.at(a.output_c()).inputs == std::vector<BlockId>{l.c_new});
  CHECK(a.at(a.output_h()).inputs == std::vector<BlockId>{l.h_new});
  CHECK(a.at(l.f).activation == ActivationFn::Sigmoid);
  CHECK(a.at(l.n).activation == ActivationFn::Tanh);
  CHECK(a.at(l.whf).activation == ActivationFn::Linear);
  CHECK(a.at(l.wxf).activation == ActivationFn::LinearB);
  CHECK(count_kind(a, BlockKind::ConstOne) == 0);
}

TEST_CASE("gru structure") {
  GruLayout l;
  Architecture a = encode_gru(&l);
  CHECK(a.identifier == "GRU_0");
  // The cell state passes straight through; nothing else reads it.
  CHECK(a.consumers(l.c) == std::vector<BlockId>{a.output_c()});
  CHECK(a.at(a.output_c()).inputs == std::vector<BlockId>{l.c});
  CHECK(count_kind(a, BlockKind::ConstOne) == 1);
  CHECK(a.at(l.omz).combination == CombinationFn::Sub);
  CHECK(a.at(l.omz).inputs == std::vector<BlockId>{l.one, l.z});
  CHECK(a.at(l.wn).activation == ActivationFn::Linear);  // no bias on the gated recurrent term
  CHECK(a.at(l.wxn).activation == ActivationFn::LinearB);
}

TEST_CASE("base architecture for random founders") {
  RandomSource rng(7);
  Architecture a = new_base_architecture(rng);
  CHECK(block_count(a) == 10);
  CHECK(validate(a).ok());
  CHECK(count_kind(a, BlockKind::Activation) == 4);
  CHECK(count_kind(a, BlockKind::Combination) == 1);

  RandomSource rng2(7);
  CHECK(new_base_architecture(rng2).blocks() == a.blocks());
}

TEST_CASE("validation flags structural violations") {
  SECTION("output without input") {
    Architecture a;
    a.add(BlockKind::InputX);
    BlockId h = a.add(BlockKind::InputH);
    a.add(BlockKind::InputC);
    a.add(BlockKind::OutputH);  // no input
    a.add(BlockKind::OutputC, {h});
    ValidationReport rep = validate(a);
    CHECK_FALSE(rep.ok());
    CHECK(has_violation(rep, "output-without-input"));
  }

  SECTION("hidden state unused") {
    Architecture a;
    BlockId x = a.add(BlockKind::InputX);
    a.add(BlockKind::InputH);
    BlockId c = a.add(BlockKind::InputC);
    BlockId t = a.add_activation(ActivationFn::Tanh, x);
    a.add(BlockKind::OutputH, {t});
    a.add(BlockKind::OutputC, {c});
    ValidationReport rep = validate(a);
    CHECK(has_violation(rep, "hidden-state-unused"));
  }

  SECTION("cycle") {
    BasicRnnLayout l;
    Architecture a = encode_basic_rnn(&l);
    // tanh -> add while add -> tanh already holds
    a.at(l.add).inputs[0] = l.tanh;
    CHECK_THROWS_AS(topological_order(a), CycleDetected);
    CHECK(has_violation(validate(a), "cycle"));
  }

  SECTION("self reference") {
    BasicRnnLayout l;
    Architecture a = encode_basic_rnn(&l);
    a.at(l.add).inputs[1] = l.add;
    CHECK(has_violation(validate(a), "self-reference"));
  }

  SECTION("unknown input") {
    BasicRnnLayout l;
    Architecture a = encode_basic_rnn(&l);
    a.at(l.add).inputs[1] = 999;
    CHECK(has_violation(validate(a), "unknown-input"));
  }

  SECTION("duplicate io block") {
    Architecture a = encode_basic_rnn();
    a.add(BlockKind::InputX);
    CHECK(has_violation(validate(a), "io-block-count"));
  }

  SECTION("dangling hidden block") {
    BasicRnnLayout l;
    Architecture a = encode_basic_rnn(&l);
    a.add_activation(ActivationFn::Sigmoid, l.h);  // consumed by nothing
    CHECK(has_violation(validate(a), "dangling-block"));
  }

  SECTION("output used as a source") {
    BasicRnnLayout l;
    Architecture a = encode_basic_rnn(&l);
    BlockId bad = a.add_activation(ActivationFn::Tanh, l.h_next);
    a.at(l.c_next).inputs[0] = bad;
    CHECK(has_violation(validate(a), "output-as-source"));
  }

  SECTION("combination arity") {
    BasicRnnLayout l;
    Architecture a = encode_basic_rnn(&l);
    a.at(l.add).inputs.pop_back();
    CHECK(has_violation(validate(a), "input-arity"));
  }
}

TEST_CASE("topological order is deterministic and respects edges") {
  Architecture a = encode_basic_rnn();
  std::vector<BlockId> order = topological_order(a);
  CHECK(order == std::vector<BlockId>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});

  for (const Architecture& b : {encode_lstm(), encode_gru()}) {
    std::vector<BlockId> ord = topological_order(b);
    REQUIRE(ord.size() == b.size());
    std::map<BlockId, std::size_t> pos;
    for (std::size_t i = 0; i < ord.size(); ++i) pos[ord[i]] = i;
    for (const auto& [id, blk] : b.blocks())
      for (BlockId in : blk.inputs) CHECK(pos.at(in) < pos.at(id));
  }
}

TEST_CASE("dot render") {
  Architecture a = encode_basic_rnn();
  std::string dot = to_dot(a);

  std::size_t nodes = 0;
  for (std::size_t p = dot.find("[label="); p != std::string::npos; p = dot.find("[label=", p + 1)) ++nodes;
  CHECK(nodes == 10);

  CHECK(dot.find("// cell-dot v1") != std::string::npos);
  CHECK(dot.find("b6 -> b7;") != std::string::npos);       // add feeds tanh
  CHECK(dot.find("[label=\"tanh\"]") != std::string::npos);
  CHECK(to_dot(a) == dot);
}

TEST_CASE("architecture documents round trip") {
  for (const Architecture& a : {encode_basic_rnn(), encode_lstm(), encode_gru()}) {
    Architecture b = deserialize(serialize(a));
    CHECK(a == b);
    CHECK(structural_hash(a) == structural_hash(b));
  }
}

TEST_CASE("deserialize rejects malformed documents") {
  Architecture a = encode_gru();
  std::string doc = serialize(a);

  SECTION("truncated text") {
    CHECK_THROWS_AS(deserialize(doc.substr(0, doc.size() / 2)), ParseError);
  }
  SECTION("unknown kind") {
    std::string bad = doc;
    auto pos = bad.find("\"const_one\"");
    REQUIRE(pos != std::string::npos);
    bad.replace(pos, 11, "\"mystery12\"");
    CHECK_THROWS_AS(deserialize(bad), ParseError);
  }
  SECTION("wrong schema version") {
    std::string bad = doc;
    auto pos = bad.find("\"schema_version\": 1");
    REQUIRE(pos != std::string::npos);
    bad.replace(pos, 19, "\"schema_version\": 9");
    CHECK_THROWS_AS(deserialize(bad), ParseError);
  }
  SECTION("dangling block reference") {
    nlohmann::json j = to_json(a);
    j["blocks"][5]["inputs"] = {4096};
    CHECK_THROWS_AS(deserialize(j.dump()), ValidationError);
  }
}

TEST_CASE("structural hash ignores ids, sees structure") {
  // Same graph, different ids: built once normally and once with padding
  // blocks minted first so every id shifts.
  auto shifted_basic = [] {
    Architecture b;
    b.identifier = "BASIC_0";
    for (int i = 0; i < 5; ++i) {
      BlockId pad = b.add(BlockKind::InputX);
      b.remove(pad);
    }
    BlockId x = b.add(BlockKind::InputX);
    BlockId h = b.add(BlockKind::InputH);
    BlockId c = b.add(BlockKind::InputC);
    BlockId wx = b.add_activation(ActivationFn::LinearB, x);
    BlockId wh = b.add_activation(ActivationFn::LinearB, h);
    BlockId add = b.add_combination(CombinationFn::Add, wx, wh);
    BlockId th = b.add_activation(ActivationFn::Tanh, add);
    BlockId cp = b.add_activation(ActivationFn::Identity, c);
    b.add(BlockKind::OutputH, {th});
    b.add(BlockKind::OutputC, {cp});
    return b;
  };
  Architecture a = encode_basic_rnn();
  Architecture b = shifted_basic();
  REQUIRE(a.blocks() != b.blocks());
  CHECK(structural_hash(a) == structural_hash(b));

  SECTION("activation function matters") {
    BasicRnnLayout l;
    Architecture c = encode_basic_rnn(&l);
    c.at(l.tanh).activation = ActivationFn::Sigmoid;
    CHECK(structural_hash(c) != structural_hash(a));
  }

  SECTION("commutative input order is ignored, sub order is not") {
    BasicRnnLayout l;
    Architecture c = encode_basic_rnn(&l);
    std::swap(c.at(l.add).inputs[0], c.at(l.add).inputs[1]);
    CHECK(structural_hash(c) == structural_hash(a));

    Architecture s1 = encode_basic_rnn(&l);
    s1.at(l.add).combination = CombinationFn::Sub;
    Architecture s2 = s1;
    std::swap(s2.at(l.add).inputs[0], s2.at(l.add).inputs[1]);
    CHECK(structural_hash(s1) != structural_hash(s2));
  }
}

TEST_CASE("fresh ids are never reused") {
  Architecture a = encode_basic_rnn();
  BlockId first = a.add(BlockKind::InputX);
  a.remove(first);
  BlockId second = a.add(BlockKind::InputX);
  CHECK(second > first);
}
