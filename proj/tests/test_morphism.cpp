#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "evocell/morphism.hpp"

using namespace evocell;

namespace {

// Valid cell with no hidden activation blocks and a single hidden block.
Architecture combination_only_cell() {
  Architecture a;
  a.identifier = "X_0";
  a.add(BlockKind::InputX);
  BlockId h = a.add(BlockKind::InputH);
  BlockId c = a.add(BlockKind::InputC);
  BlockId comb = a.add_combination(CombinationFn::Add, h, h);
  a.add(BlockKind::OutputH, {comb});
  a.add(BlockKind::OutputC, {c});
  return a;
}

// Fixture where remove_connection applies: the add-combination joins two
// blocks that both also feed an elementwise product.
Architecture removable_connection_cell() {
  Architecture a;
  a.identifier = "X_0";
  a.add(BlockKind::InputX);
  BlockId h = a.add(BlockKind::InputH);
  a.add(BlockKind::InputC);
  BlockId s1 = a.add_activation(ActivationFn::Tanh, h);
  BlockId s2 = a.add_activation(ActivationFn::Sigmoid, h);
  BlockId combo = a.add_combination(CombinationFn::Add, s1, s2);
  BlockId m = a.add_combination(CombinationFn::ElemMul, s1, s2);
  a.add(BlockKind::OutputH, {combo});
  a.add(BlockKind::OutputC, {m});
  return a;
}

}  // namespace

TEST_CASE("add_unit splices one fresh activation block") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RandomSource rng(seed);
    Architecture a = encode_basic_rnn();
    BlockId next_before = a.peek_next_id();
    auto rec = add_unit(a, rng);
    REQUIRE(rec.has_value());
    CHECK(rec->applied);
    CHECK(a.size() == 11);
    CHECK(rec->created == next_before);
    CHECK(validate(a).ok());
    // the new block sits between target and its former input
    CHECK(a.at(rec->created).inputs == std::vector<BlockId>{rec->other});
    CHECK(a.at(rec->target).inputs.at(static_cast<std::size_t>(rec->slot)) == rec->created);
    CHECK(a.at(rec->created).activation == rec->activation);
  }
}

TEST_CASE("three add_units grow the cell by three blocks") {
  RandomSource rng(42);
  Architecture a = encode_gru();
  for (int i = 0; i < 3; ++i) REQUIRE(add_unit(a, rng).has_value());
  CHECK(a.size() == 26);
  CHECK(validate(a).ok());
}

TEST_CASE("remove_unit deletes a hidden activation and rewires consumers") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RandomSource rng(seed);
    Architecture a = encode_lstm();
    auto rec = remove_unit(a, rng);
    REQUIRE(rec.has_value());
    CHECK(a.size() == 25);
    CHECK_FALSE(a.contains(rec->target));
    CHECK(validate(a).ok());
  }
}

TEST_CASE("remove_unit undoes an identity splice") {
  Architecture parent = encode_basic_rnn();
  std::uint64_t parent_hash = structural_hash(parent);

  bool inverted = false;
  for (std::uint64_t seed = 0; seed < 400 && !inverted; ++seed) {
    RandomSource rng(seed);
    Architecture a = parent;
    auto grown = add_unit(a, rng);
    REQUIRE(grown.has_value());
    auto shrunk = remove_unit(a, rng);
    REQUIRE(shrunk.has_value());
    if (shrunk->target != grown->created) continue;
    CHECK(structural_hash(a) == parent_hash);
    CHECK(a.size() == parent.size());
    inverted = true;
  }
  CHECK(inverted);
}

TEST_CASE("remove_unit is not applicable without hidden activations") {
  RandomSource rng(1);
  Architecture a = combination_only_cell();
  REQUIRE(validate(a).ok());
  CHECK_FALSE(remove_unit(a, rng).has_value());
  CHECK(a.size() == 6);
}

TEST_CASE("add_connection joins two hidden blocks through a fresh add block") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RandomSource rng(seed);
    Architecture a = encode_lstm();
    auto rec = add_connection(a, rng);
    REQUIRE(rec.has_value());
    CHECK(a.size() == 27);
    CHECK(validate(a).ok());
    const Block& created = a.at(rec->created);
    CHECK(created.kind == BlockKind::Combination);
    CHECK(created.combination == CombinationFn::Add);
    CHECK(created.inputs == std::vector<BlockId>{rec->target, rec->other});
    // every former consumer of the first block now reads the combination
    CHECK(a.consumers(rec->target) == std::vector<BlockId>{rec->created});
  }
}

TEST_CASE("add_connection is not applicable with fewer than two hidden blocks") {
  RandomSource rng(3);
  Architecture a = combination_only_cell();
  CHECK_FALSE(add_connection(a, rng).has_value());
}

TEST_CASE("remove_connection needs both joined blocks used elsewhere") {
  RandomSource rng(5);

  SECTION("basic rnn has no candidate") {
    Architecture a = encode_basic_rnn();
    CHECK_FALSE(remove_connection(a, rng).has_value());
    CHECK(a.size() == 10);
  }

  SECTION("fixture with a removable join") {
    Architecture a = removable_connection_cell();
    REQUIRE(validate(a).ok());
    auto rec = remove_connection(a, rng);
    REQUIRE(rec.has_value());
    CHECK(a.size() == 8);
    CHECK_FALSE(a.contains(rec->target));
    CHECK(validate(a).ok());
    // h_next now reads the first joined block directly
    CHECK(a.at(a.output_h()).inputs == std::vector<BlockId>{rec->other});
  }
}

TEST_CASE("add_recurrent_connection feeds an output through a fresh add block") {
  std::set<BlockKind> source_kinds;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    RandomSource rng(seed);
    Architecture a = encode_basic_rnn();
    auto rec = add_recurrent_connection(a, rng);
    REQUIRE(rec.has_value());
    CHECK(a.size() == 11);
    CHECK(validate(a).ok());
    const Block& out = a.at(rec->target);
    REQUIRE(out.inputs.size() == 1);
    CHECK(out.inputs[0] == rec->created);
    CHECK(a.at(rec->created).combination == CombinationFn::Add);
    source_kinds.insert(a.at(rec->other).kind);
  }
  // the source pool covers input layer blocks, the previous cell state
  // included, which is how dormant state inputs come back into use
  CHECK(source_kinds.count(BlockKind::InputC) == 1);
  CHECK(source_kinds.count(BlockKind::Activation) == 1);
}

TEST_CASE("change_activation rewrites one hidden activation to a different function") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RandomSource rng(seed);
    Architecture a = encode_basic_rnn();
    Architecture before = a;
    auto rec = change_activation(a, rng);
    REQUIRE(rec.has_value());
    CHECK(a.size() == before.size());
    CHECK(validate(a).ok());
    CHECK(a.at(rec->target).activation == rec->activation);
    CHECK(before.at(rec->target).activation != rec->activation);
  }
}

TEST_CASE("change_combination rewrites one combination method") {
  BasicRnnLayout l;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RandomSource rng(seed);
    Architecture a = encode_basic_rnn(&l);
    auto rec = change_combination(a, rng);
    REQUIRE(rec.has_value());
    CHECK(rec->target == l.add);  // the only combination block
    CHECK(a.at(l.add).combination != CombinationFn::Add);
    CHECK(a.size() == 10);
    CHECK(validate(a).ok());
  }
}

TEST_CASE("transform application keeps architectures valid with exact size deltas") {
  std::map<TransformKind, int> expected_delta = {
      {TransformKind::AddUnit, 1},          {TransformKind::RemoveUnit, -1},
      {TransformKind::AddConnection, 1},    {TransformKind::RemoveConnection, -1},
      {TransformKind::AddRecurrentConnection, 1},
      {TransformKind::ChangeActivation, 0}, {TransformKind::ChangeCombination, 0}};

  RandomSource rng(2024);
  IdentifierFactory ids;
  std::vector<Architecture> lineage = {encode_basic_rnn(), encode_lstm(), encode_gru(),
                                       random_initial_architecture(rng, ids)};
  int applied = 0;
  for (int step = 0; step < 1500; ++step) {
    Architecture& a = lineage[step % lineage.size()];
    TransformKind kind = kAllTransforms[rng.uniform_index(kAllTransforms.size())];
    std::size_t before = a.size();
    auto rec = apply_transform(a, kind, rng);
    if (!rec) {
      CHECK(a.size() == before);
      continue;
    }
    ++applied;
    CHECK(static_cast<int>(a.size()) - static_cast<int>(before) == expected_delta.at(kind));
    ValidationReport rep = validate(a);
    INFO("step " << step << " kind " << to_string(kind));
    REQUIRE(rep.ok());
  }
  CHECK(applied > 1000);
}

TEST_CASE("generate_offspring records every attempt and mints lineage identifiers") {
  RandomSource rng(9);
  IdentifierFactory ids;
  Architecture parent = encode_basic_rnn();

  auto [child1, rec1] = generate_offspring(parent, 3, rng, ids);
  CHECK(child1.identifier == "BASIC_1");
  CHECK(rec1.parent == "BASIC_0");
  CHECK(rec1.offspring == "BASIC_1");
  CHECK(rec1.transforms.size() >= 1);
  CHECK(rec1.transforms.size() <= 3);
  CHECK(validate(child1).ok());

  auto [child2, rec2] = generate_offspring(parent, 3, rng, ids);
  CHECK(child2.identifier == "BASIC_2");

  auto [grand, rec3] = generate_offspring(child1, 3, rng, ids);
  CHECK(grand.identifier == "BASIC_3");

  CHECK_THROWS_AS(generate_offspring(parent, 0, rng, ids), ConfigError);
}

TEST_CASE("generate_offspring is deterministic in the rng seed") {
  IdentifierFactory ids1, ids2;
  RandomSource r1(77), r2(77);
  auto [c1, m1] = generate_offspring(encode_gru(), 5, r1, ids1);
  auto [c2, m2] = generate_offspring(encode_gru(), 5, r2, ids2);
  CHECK(c1 == c2);
  CHECK(m1.transforms.size() == m2.transforms.size());
}

TEST_CASE("morphism records replay to the recorded offspring") {
  RandomSource rng(31337);
  IdentifierFactory ids;
  std::vector<Architecture> parents = {encode_basic_rnn(), encode_lstm(), encode_gru()};
  for (int trial = 0; trial < 100; ++trial) {
    const Architecture& parent = parents[trial % parents.size()];
    auto [child, record] = generate_offspring(parent, 4, rng, ids);
    Architecture replayed = replay(parent, record);
    INFO("trial " << trial << " offspring " << record.offspring);
    REQUIRE(replayed == child);
  }
}

TEST_CASE("random founders are valid and bounded") {
  RandomSource rng(123);
  IdentifierFactory ids;
  Architecture first = random_initial_architecture(rng, ids);
  CHECK(first.identifier == "rdm0_0");
  Architecture second = random_initial_architecture(rng, ids);
  CHECK(second.identifier == "rdm1_0");

  RandomSource replay_rng(123);
  IdentifierFactory replay_ids;
  CHECK(random_initial_architecture(replay_rng, replay_ids) == first);

  for (int i = 0; i < 50; ++i) {
    Architecture a = random_initial_architecture(rng, ids);
    CHECK(validate(a).ok());
    CHECK(a.size() >= 10);   // base template plus only growth transforms
    CHECK(a.size() <= 20);   // at most ten, each adding at most one block
  }
}

TEST_CASE("identifier factory parses and extends the X_c convention") {
  auto [fam, c] = IdentifierFactory::split("rdm82_21");
  CHECK(fam == "rdm82");
  CHECK(c == 21);
  CHECK_THROWS_AS(IdentifierFactory::split("bogus"), ValidationError);
  CHECK_THROWS_AS(IdentifierFactory::split("x_"), ValidationError);

  IdentifierFactory ids;
  CHECK(ids.offspring_of("LSTM_58") == "LSTM_59");
  CHECK(ids.offspring_of("LSTM_2") == "LSTM_60");
}
