#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evocell/arch.hpp"
#include "evocell/errors.hpp"
#include "evocell/rng.hpp"

namespace evocell {

enum class TransformKind : std::uint8_t {
  AddUnit,
  RemoveUnit,
  AddConnection,
  RemoveConnection,
  AddRecurrentConnection,
  ChangeActivation,
  ChangeCombination,
};

inline constexpr std::array<TransformKind, 7> kAllTransforms = {
    TransformKind::AddUnit,          TransformKind::RemoveUnit,       TransformKind::AddConnection,
    TransformKind::RemoveConnection, TransformKind::AddRecurrentConnection,
    TransformKind::ChangeActivation, TransformKind::ChangeCombination};

// Transforms that can only grow or reshape, never shrink; used when sampling
// random initial architectures.
inline constexpr std::array<TransformKind, 5> kConstructiveTransforms = {
    TransformKind::AddUnit, TransformKind::AddConnection, TransformKind::AddRecurrentConnection,
    TransformKind::ChangeActivation, TransformKind::ChangeCombination};

inline const char* to_string(TransformKind k) {
  switch (k) {
    case TransformKind::AddUnit: return "add_unit";
    case TransformKind::RemoveUnit: return "remove_unit";
    case TransformKind::AddConnection: return "add_connection";
    case TransformKind::RemoveConnection: return "remove_connection";
    case TransformKind::AddRecurrentConnection: return "add_recurrent_connection";
    case TransformKind::ChangeActivation: return "change_activation";
    case TransformKind::ChangeCombination: return "change_combination";
  }
  return "?";
}

inline std::optional<TransformKind> parse_transform_kind(std::string_view text) {
  return parse_enum<TransformKind>(text, kAllTransforms);
}

// One attempted transform. `applied` is false when the draw was not
// applicable (the attempt is still recorded so lineage logs show it). The id
// and function fields are a replay payload: applying the same record to the
// same parent reproduces the offspring exactly, fresh ids included.
struct TransformRecord {
  TransformKind kind = TransformKind::AddUnit;
  bool applied = false;
  BlockId created = 0;  // new block id (add_unit, add_connection, add_recurrent_connection)
  BlockId target = 0;   // spliced/removed/changed block, or the output block for recurrent adds
  BlockId other = 0;    // replaced input, second combined block, or the recurrent source
  int slot = -1;        // which input slot of target was spliced (add_unit only)
  ActivationFn activation = ActivationFn::Identity;
  CombinationFn combination = CombinationFn::Add;

  std::vector<BlockId> affected() const {
    std::vector<BlockId> ids;
    for (BlockId id : {created, target, other})
      if (id != 0) ids.push_back(id);
    return ids;
  }
};

struct MorphismRecord {
  std::string parent;
  std::string offspring;
  std::vector<TransformRecord> transforms;  // length in [1, max_transforms]
};

namespace detail {

inline std::vector<BlockId> hidden_blocks(const Architecture& a) {
  std::vector<BlockId> out;
  for (const auto& [id, b] : a.blocks()) {
    if (b.kind == BlockKind::Activation || b.kind == BlockKind::Combination || b.kind == BlockKind::ConstOne)
      out.push_back(id);
  }
  return out;
}

inline std::vector<BlockId> hidden_activations(const Architecture& a) {
  std::vector<BlockId> out;
  for (const auto& [id, b] : a.blocks())
    if (b.kind == BlockKind::Activation) out.push_back(id);
  return out;
}

inline bool is_input(BlockKind k) {
  return k == BlockKind::InputX || k == BlockKind::InputH || k == BlockKind::InputC;
}
inline bool is_output(BlockKind k) { return k == BlockKind::OutputH || k == BlockKind::OutputC; }

inline bool acyclic(const Architecture& a) {
  try {
    topological_order(a);
    return true;
  } catch (const CycleDetected&) {
    return false;
  }
}

inline void replace_input(Block& b, BlockId from, BlockId to) {
  for (BlockId& in : b.inputs)
    if (in == from) in = to;
}

}  // namespace detail

// Splices a fresh single-input block between a chosen non-input block and one
// of its inputs. Function preserving when the new block computes identity.
inline std::optional<TransformRecord> add_unit(Architecture& a, RandomSource& rng) {
  std::vector<BlockId> targets;
  for (const auto& [id, b] : a.blocks())
    if (!detail::is_input(b.kind) && !b.inputs.empty()) targets.push_back(id);
  if (targets.empty()) return std::nullopt;

  BlockId target = targets[rng.uniform_index(targets.size())];
  std::size_t slot = rng.uniform_index(a.at(target).inputs.size());
  ActivationFn fn = kAllActivations[rng.uniform_index(kAllActivations.size())];

  BlockId old_in = a.at(target).inputs[slot];
  BlockId created = a.add_activation(fn, old_in);
  a.at(target).inputs[slot] = created;

  TransformRecord rec;
  rec.kind = TransformKind::AddUnit;
  rec.applied = true;
  rec.created = created;
  rec.target = target;
  rec.other = old_in;
  rec.slot = static_cast<int>(slot);
  rec.activation = fn;
  return rec;
}

// Deletes a hidden activation block and rewires its consumers to its input.
// Only candidates whose removal keeps the architecture valid are considered.
inline std::optional<TransformRecord> remove_unit(Architecture& a, RandomSource& rng) {
  std::vector<BlockId> candidates;
  for (BlockId id : detail::hidden_activations(a)) {
    Architecture trial = a;
    BlockId source = trial.at(id).inputs[0];
    for (BlockId c : trial.consumers(id)) detail::replace_input(trial.at(c), id, source);
    trial.remove(id);
    if (validate(trial).ok()) candidates.push_back(id);
  }
  if (candidates.empty()) return std::nullopt;

  BlockId victim = candidates[rng.uniform_index(candidates.size())];
  BlockId source = a.at(victim).inputs[0];
  for (BlockId c : a.consumers(victim)) detail::replace_input(a.at(c), victim, source);
  a.remove(victim);

  TransformRecord rec;
  rec.kind = TransformKind::RemoveUnit;
  rec.applied = true;
  rec.target = victim;
  rec.other = source;
  return rec;
}

// Joins two hidden blocks with a fresh add-combination; every previous
// consumer of the first block now reads the combination instead. Pairs that
// are already directly connected or already jointly combined are rejected, as
// are pairs whose join would close a cycle. Resamples a bounded number of
// times before giving up.
inline std::optional<TransformRecord> add_connection(Architecture& a, RandomSource& rng) {
  std::vector<BlockId> hidden = detail::hidden_blocks(a);
  if (hidden.size() < 2) return std::nullopt;

  for (int attempt = 0; attempt < 32; ++attempt) {
    BlockId first = hidden[rng.uniform_index(hidden.size())];
    BlockId second = hidden[rng.uniform_index(hidden.size())];
    if (first == second) continue;

    const Block& fb = a.at(first);
    const Block& sb = a.at(second);
    auto direct = [](const Block& b, BlockId id) {
      return std::find(b.inputs.begin(), b.inputs.end(), id) != b.inputs.end();
    };
    if (direct(fb, second) || direct(sb, first)) continue;

    bool combined = false;
    for (const auto& [id, b] : a.blocks()) {
      if (b.kind != BlockKind::Combination || b.inputs.size() != 2) continue;
      if ((b.inputs[0] == first && b.inputs[1] == second) || (b.inputs[0] == second && b.inputs[1] == first))
        combined = true;
    }
    if (combined) continue;

    Architecture trial = a;
    std::vector<BlockId> consumers = trial.consumers(first);
    BlockId created = trial.add_combination(CombinationFn::Add, first, second);
    for (BlockId c : consumers) detail::replace_input(trial.at(c), first, created);
    if (!detail::acyclic(trial)) continue;

    a = std::move(trial);
    TransformRecord rec;
    rec.kind = TransformKind::AddConnection;
    rec.applied = true;
    rec.created = created;
    rec.target = first;
    rec.other = second;
    return rec;
  }
  return std::nullopt;
}

// Inverse of add_connection: drops an add-combination whose inputs are both
// consumed elsewhere, rewiring its consumers to its first input.
inline std::optional<TransformRecord> remove_connection(Architecture& a, RandomSource& rng) {
  std::vector<BlockId> candidates;
  for (const auto& [id, b] : a.blocks()) {
    if (b.kind != BlockKind::Combination || b.combination != CombinationFn::Add) continue;
    bool both_used = true;
    for (BlockId in : b.inputs) {
      auto cons = a.consumers(in);
      cons.erase(std::remove(cons.begin(), cons.end(), id), cons.end());
      if (cons.empty()) both_used = false;
    }
    if (!both_used) continue;
    Architecture trial = a;
    for (BlockId c : trial.consumers(id)) detail::replace_input(trial.at(c), id, b.inputs[0]);
    trial.remove(id);
    if (validate(trial).ok()) candidates.push_back(id);
  }
  if (candidates.empty()) return std::nullopt;

  BlockId victim = candidates[rng.uniform_index(candidates.size())];
  BlockId source = a.at(victim).inputs[0];
  for (BlockId c : a.consumers(victim)) detail::replace_input(a.at(c), victim, source);
  a.remove(victim);

  TransformRecord rec;
  rec.kind = TransformKind::RemoveConnection;
  rec.applied = true;
  rec.target = victim;
  rec.other = source;
  return rec;
}

// Feeds one output block from a fresh add-combination of its former input and
// a randomly selected non-output block. Drawing an input block (in
// particular the previous cell state) is what lets lineages that ignored a
// state input start using it.
inline std::optional<TransformRecord> add_recurrent_connection(Architecture& a, RandomSource& rng) {
  std::vector<BlockId> outputs;
  std::vector<BlockId> sources;
  for (const auto& [id, b] : a.blocks()) {
    if (detail::is_output(b.kind)) outputs.push_back(id);
    else sources.push_back(id);
  }
  if (outputs.empty() || sources.empty()) return std::nullopt;

  BlockId out = outputs[rng.uniform_index(outputs.size())];
  BlockId source = sources[rng.uniform_index(sources.size())];
  BlockId former = a.at(out).inputs[0];
  BlockId created = a.add_combination(CombinationFn::Add, former, source);
  a.at(out).inputs[0] = created;

  TransformRecord rec;
  rec.kind = TransformKind::AddRecurrentConnection;
  rec.applied = true;
  rec.created = created;
  rec.target = out;
  rec.other = source;
  return rec;
}

inline std::optional<TransformRecord> change_activation(Architecture& a, RandomSource& rng) {
  std::vector<BlockId> candidates = detail::hidden_activations(a);
  if (candidates.empty()) return std::nullopt;
  BlockId target = candidates[rng.uniform_index(candidates.size())];

  std::vector<ActivationFn> options;
  for (ActivationFn fn : kAllActivations)
    if (fn != a.at(target).activation) options.push_back(fn);
  ActivationFn fn = options[rng.uniform_index(options.size())];
  a.at(target).activation = fn;

  TransformRecord rec;
  rec.kind = TransformKind::ChangeActivation;
  rec.applied = true;
  rec.target = target;
  rec.activation = fn;
  return rec;
}

inline std::optional<TransformRecord> change_combination(Architecture& a, RandomSource& rng) {
  std::vector<BlockId> candidates;
  for (const auto& [id, b] : a.blocks())
    if (b.kind == BlockKind::Combination) candidates.push_back(id);
  if (candidates.empty()) return std::nullopt;
  BlockId target = candidates[rng.uniform_index(candidates.size())];

  std::vector<CombinationFn> options;
  for (CombinationFn fn : kAllCombinations)
    if (fn != a.at(target).combination) options.push_back(fn);
  CombinationFn fn = options[rng.uniform_index(options.size())];
  a.at(target).combination = fn;

  TransformRecord rec;
  rec.kind = TransformKind::ChangeCombination;
  rec.applied = true;
  rec.target = target;
  rec.combination = fn;
  return rec;
}

inline std::optional<TransformRecord> apply_transform(Architecture& a, TransformKind kind, RandomSource& rng) {
  switch (kind) {
    case TransformKind::AddUnit: return add_unit(a, rng);
    case TransformKind::RemoveUnit: return remove_unit(a, rng);
    case TransformKind::AddConnection: return add_connection(a, rng);
    case TransformKind::RemoveConnection: return remove_connection(a, rng);
    case TransformKind::AddRecurrentConnection: return add_recurrent_connection(a, rng);
    case TransformKind::ChangeActivation: return change_activation(a, rng);
    case TransformKind::ChangeCombination: return change_combination(a, rng);
  }
  return std::nullopt;
}

// Re-applies a recorded transform without randomness. Replay runs against the
// same parent the record was produced from, so fresh ids must come out
// identical; a mismatch means the record and architecture diverged.
inline void apply_record(Architecture& a, const TransformRecord& rec) {
  if (!rec.applied) return;
  auto expect_created = [&](BlockId got) {
    if (got != rec.created)
      throw ValidationError("replay id mismatch: expected " + std::to_string(rec.created) + ", minted " +
                            std::to_string(got));
  };
  switch (rec.kind) {
    case TransformKind::AddUnit: {
      BlockId created = a.add_activation(rec.activation, rec.other);
      expect_created(created);
      a.at(rec.target).inputs.at(static_cast<std::size_t>(rec.slot)) = created;
      break;
    }
    case TransformKind::RemoveUnit:
    case TransformKind::RemoveConnection: {
      for (BlockId c : a.consumers(rec.target)) detail::replace_input(a.at(c), rec.target, rec.other);
      a.remove(rec.target);
      break;
    }
    case TransformKind::AddConnection: {
      std::vector<BlockId> consumers = a.consumers(rec.target);
      BlockId created = a.add_combination(CombinationFn::Add, rec.target, rec.other);
      expect_created(created);
      for (BlockId c : consumers) detail::replace_input(a.at(c), rec.target, created);
      break;
    }
    case TransformKind::AddRecurrentConnection: {
      BlockId former = a.at(rec.target).inputs[0];
      BlockId created = a.add_combination(CombinationFn::Add, former, rec.other);
      expect_created(created);
      a.at(rec.target).inputs[0] = created;
      break;
    }
    case TransformKind::ChangeActivation: a.at(rec.target).activation = rec.activation; break;
    case TransformKind::ChangeCombination: a.at(rec.target).combination = rec.combination; break;
  }
}

// Offspring identifiers follow the X_c convention: X names the founding
// lineage (BASIC, LSTM, GRU, rdm<Y>) and c counts descendants of that
// lineage minted so far in this run.
class IdentifierFactory {
 public:
  static std::pair<std::string, int> split(const std::string& identifier) {
    auto pos = identifier.rfind('_');
    if (pos == std::string::npos || pos + 1 >= identifier.size())
      throw ValidationError("identifier '" + identifier + "' is not of the form X_c");
    try {
      return {identifier.substr(0, pos), std::stoi(identifier.substr(pos + 1))};
    } catch (const std::exception&) {
      throw ValidationError("identifier '" + identifier + "' is not of the form X_c");
    }
  }

  std::string offspring_of(const std::string& parent_identifier) {
    auto [family, c] = split(parent_identifier);
    int& next = next_child_[family];
    next = std::max(next, c + 1);
    return family + "_" + std::to_string(next++);
  }

  std::string fresh_random() { return "rdm" + std::to_string(next_random_++) + "_0"; }

 private:
  std::map<std::string, int> next_child_;
  int next_random_ = 0;
};

// Draws k in [1, max_transforms] transform attempts and applies them in
// order. Attempts that come up not-applicable are recorded but skipped, so
// the offspring can equal its parent structurally (it still gets a fresh
// identifier and is deduplicated later by structural hash).
inline std::pair<Architecture, MorphismRecord> generate_offspring(const Architecture& parent, int max_transforms,
                                                                  RandomSource& rng, IdentifierFactory& ids) {
  if (max_transforms < 1) throw ConfigError("max_transforms must be at least 1");
  Architecture child = parent;
  MorphismRecord record;
  record.parent = parent.identifier;

  int k = rng.uniform_int(1, max_transforms);
  for (int i = 0; i < k; ++i) {
    TransformKind kind = kAllTransforms[rng.uniform_index(kAllTransforms.size())];
    auto rec = apply_transform(child, kind, rng);
    if (rec) {
      record.transforms.push_back(*rec);
    } else {
      TransformRecord skipped;
      skipped.kind = kind;
      skipped.applied = false;
      record.transforms.push_back(skipped);
    }
  }

  child.identifier = ids.offspring_of(parent.identifier);
  record.offspring = child.identifier;
  return {std::move(child), std::move(record)};
}

inline Architecture replay(const Architecture& parent, const MorphismRecord& record) {
  Architecture child = parent;
  for (const auto& rec : record.transforms) apply_record(child, rec);
  child.identifier = record.offspring;
  return child;
}

// Random founder: the minimal template plus 1..10 constructive transforms.
inline Architecture random_initial_architecture(RandomSource& rng, IdentifierFactory& ids) {
  Architecture a = new_base_architecture(rng);
  int k = rng.uniform_int(1, 10);
  for (int i = 0; i < k; ++i) {
    TransformKind kind = kConstructiveTransforms[rng.uniform_index(kConstructiveTransforms.size())];
    apply_transform(a, kind, rng);
  }
  a.identifier = ids.fresh_random();
  return a;
}

}  // namespace evocell
