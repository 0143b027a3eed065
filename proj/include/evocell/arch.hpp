#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evocell/errors.hpp"
#include "evocell/rng.hpp"

namespace evocell {

// Ids start at 1 and are never reused within a lineage; 0 is reserved for the
// readout pseudo-block that lives outside the cell graph.
using BlockId = std::uint32_t;

enum class BlockKind : std::uint8_t {
  InputX,       // current input vector x_t
  InputH,       // previous hidden state h_{t-1}
  InputC,       // previous cell state c_{t-1}
  OutputH,      // next hidden state h_t (exactly one input)
  OutputC,      // next cell state c_t (exactly one input)
  Activation,   // single-input transform, see ActivationFn
  Combination,  // two-input elementwise merge, see CombinationFn
  ConstOne,     // emits a ones vector of hidden width; seed-only helper
};

enum class ActivationFn : std::uint8_t {
  LinearB,    // W*v + b
  Linear,     // W*v, no bias
  Identity,   // v
  Sigmoid,
  Tanh,
  Relu,
  LeakyRelu,  // slope below zero is configurable at compile time
};

enum class CombinationFn : std::uint8_t {
  Add,
  Sub,      // first input minus second input
  ElemMul,
};

inline constexpr std::array<ActivationFn, 7> kAllActivations = {
    ActivationFn::LinearB, ActivationFn::Linear,  ActivationFn::Identity, ActivationFn::Sigmoid,
    ActivationFn::Tanh,    ActivationFn::Relu,    ActivationFn::LeakyRelu};

inline constexpr std::array<CombinationFn, 3> kAllCombinations = {CombinationFn::Add, CombinationFn::Sub,
                                                                  CombinationFn::ElemMul};

inline const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::InputX: return "input_x";
    case BlockKind::InputH: return "input_h";
    case BlockKind::InputC: return "input_c";
    case BlockKind::OutputH: return "output_h";
    case BlockKind::OutputC: return "output_c";
    case BlockKind::Activation: return "activation";
    case BlockKind::Combination: return "combination";
    case BlockKind::ConstOne: return "const_one";
  }
  return "?";
}

inline const char* to_string(ActivationFn f) {
  switch (f) {
    case ActivationFn::LinearB: return "linear_b";
    case ActivationFn::Linear: return "linear";
    case ActivationFn::Identity: return "identity";
    case ActivationFn::Sigmoid: return "sigmoid";
    case ActivationFn::Tanh: return "tanh";
    case ActivationFn::Relu: return "relu";
    case ActivationFn::LeakyRelu: return "leaky_relu";
  }
  return "?";
}

inline const char* to_string(CombinationFn f) {
  switch (f) {
    case CombinationFn::Add: return "add";
    case CombinationFn::Sub: return "sub";
    case CombinationFn::ElemMul: return "elem_mul";
  }
  return "?";
}

template <class Enum, class Range>
std::optional<Enum> parse_enum(std::string_view text, const Range& all) {
  for (auto v : all)
    if (text == to_string(v)) return v;
  return std::nullopt;
}

inline std::optional<BlockKind> parse_block_kind(std::string_view text) {
  static constexpr std::array<BlockKind, 8> all = {BlockKind::InputX,     BlockKind::InputH,      BlockKind::InputC,
                                                   BlockKind::OutputH,    BlockKind::OutputC,     BlockKind::Activation,
                                                   BlockKind::Combination, BlockKind::ConstOne};
  return parse_enum<BlockKind>(text, all);
}
inline std::optional<ActivationFn> parse_activation(std::string_view text) {
  return parse_enum<ActivationFn>(text, kAllActivations);
}
inline std::optional<CombinationFn> parse_combination(std::string_view text) {
  return parse_enum<CombinationFn>(text, kAllCombinations);
}

// Required input arity per kind.
inline int expected_inputs(BlockKind k) {
  switch (k) {
    case BlockKind::InputX:
    case BlockKind::InputH:
    case BlockKind::InputC:
    case BlockKind::ConstOne: return 0;
    case BlockKind::OutputH:
    case BlockKind::OutputC:
    case BlockKind::Activation: return 1;
    case BlockKind::Combination: return 2;
  }
  return 0;
}

struct Block {
  BlockId id = 0;
  BlockKind kind = BlockKind::Activation;
  ActivationFn activation = ActivationFn::Identity;    // meaningful when kind == Activation
  CombinationFn combination = CombinationFn::Add;      // meaningful when kind == Combination
  std::vector<BlockId> inputs;

  bool operator==(const Block&) const = default;
};

// A cell genotype: a DAG of blocks. Values are cheap to copy; morphisms work
// on copies and the original is never mutated after construction.
class Architecture {
 public:
  std::string identifier;

  const std::map<BlockId, Block>& blocks() const { return blocks_; }
  std::size_t size() const { return blocks_.size(); }
  bool contains(BlockId id) const { return blocks_.count(id) != 0; }

  const Block& at(BlockId id) const { return blocks_.at(id); }
  Block& at(BlockId id) { return blocks_.at(id); }

  BlockId peek_next_id() const { return next_id_; }

  // Fresh-id insertion; ids are monotone and never recycled, even after
  // removals, so parameter inheritance can key on them safely.
  BlockId add(BlockKind kind, std::vector<BlockId> inputs = {}) {
    Block b;
    b.id = next_id_++;
    b.kind = kind;
    b.inputs = std::move(inputs);
    BlockId id = b.id;
    blocks_.emplace(id, std::move(b));
    return id;
  }

  BlockId add_activation(ActivationFn fn, BlockId input) {
    BlockId id = add(BlockKind::Activation, {input});
    blocks_.at(id).activation = fn;
    return id;
  }

  BlockId add_combination(CombinationFn fn, BlockId first, BlockId second) {
    BlockId id = add(BlockKind::Combination, {first, second});
    blocks_.at(id).combination = fn;
    return id;
  }

  // Used by deserialization to reconstruct stored ids exactly.
  void insert_raw(Block b) {
    if (b.id == 0 || contains(b.id)) throw ValidationError("duplicate or zero block id in document");
    next_id_ = std::max(next_id_, b.id + 1);
    blocks_.emplace(b.id, std::move(b));
  }

  void remove(BlockId id) { blocks_.erase(id); }

  std::optional<BlockId> find_unique(BlockKind kind) const {
    std::optional<BlockId> found;
    for (const auto& [id, b] : blocks_) {
      if (b.kind != kind) continue;
      if (found) return std::nullopt;
      found = id;
    }
    return found;
  }

  BlockId io(BlockKind kind) const {
    auto id = find_unique(kind);
    if (!id) throw ValidationError(std::string("architecture lacks unique ") + to_string(kind) + " block");
    return *id;
  }

  BlockId input_x() const { return io(BlockKind::InputX); }
  BlockId input_h() const { return io(BlockKind::InputH); }
  BlockId input_c() const { return io(BlockKind::InputC); }
  BlockId output_h() const { return io(BlockKind::OutputH); }
  BlockId output_c() const { return io(BlockKind::OutputC); }

  // Blocks listing `id` among their inputs, ascending id order. A block
  // consuming `id` twice appears once.
  std::vector<BlockId> consumers(BlockId id) const {
    std::vector<BlockId> out;
    for (const auto& [bid, b] : blocks_) {
      if (std::find(b.inputs.begin(), b.inputs.end(), id) != b.inputs.end()) out.push_back(bid);
    }
    return out;
  }

  bool operator==(const Architecture& other) const {
    return identifier == other.identifier && blocks_ == other.blocks_;
  }

 private:
  std::map<BlockId, Block> blocks_;
  BlockId next_id_ = 1;
};

inline std::size_t block_count(const Architecture& a) { return a.size(); }

// Topological order over intra-cell edges (the recurrence lives between time
// steps, not in the graph). Kahn's algorithm; ties broken by smallest id.
inline std::vector<BlockId> topological_order(const Architecture& a) {
  std::map<BlockId, int> pending;
  for (const auto& [id, b] : a.blocks()) {
    int n = 0;
    for (BlockId in : b.inputs)
      if (a.contains(in)) ++n;
    pending[id] = n;
  }
  std::set<BlockId> ready;
  for (const auto& [id, n] : pending)
    if (n == 0) ready.insert(id);

  std::vector<BlockId> order;
  order.reserve(a.size());
  while (!ready.empty()) {
    BlockId id = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(id);
    for (BlockId c : a.consumers(id)) {
      const Block& cb = a.at(c);
      int uses = static_cast<int>(std::count(cb.inputs.begin(), cb.inputs.end(), id));
      pending[c] -= uses;
      if (pending[c] == 0) ready.insert(c);
    }
  }
  if (order.size() != a.size()) throw CycleDetected("architecture " + a.identifier + " contains a cycle");
  return order;
}

struct Violation {
  BlockId block = 0;  // 0 when the rule is not about a single block
  std::string rule;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

// Structural validity rules. Collects every violation rather than stopping at
// the first; never throws.
inline ValidationReport validate(const Architecture& a) {
  ValidationReport rep;
  auto flag = [&rep](BlockId id, std::string rule, std::string detail) {
    rep.violations.push_back({id, std::move(rule), std::move(detail)});
  };

  const std::array<BlockKind, 5> io_kinds = {BlockKind::InputX, BlockKind::InputH, BlockKind::InputC,
                                             BlockKind::OutputH, BlockKind::OutputC};
  for (BlockKind k : io_kinds) {
    int n = 0;
    for (const auto& [id, b] : a.blocks())
      if (b.kind == k) ++n;
    if (n != 1)
      flag(0, "io-block-count",
           std::string(to_string(k)) + " appears " + std::to_string(n) + " times, expected exactly 1");
  }

  for (const auto& [id, b] : a.blocks()) {
    bool is_output = b.kind == BlockKind::OutputH || b.kind == BlockKind::OutputC;
    int want = expected_inputs(b.kind);
    if (static_cast<int>(b.inputs.size()) != want) {
      if (is_output && b.inputs.empty())
        flag(id, "output-without-input", std::string(to_string(b.kind)) + " has no input");
      else
        flag(id, "input-arity", std::string(to_string(b.kind)) + " has " + std::to_string(b.inputs.size()) +
                                    " inputs, expected " + std::to_string(want));
    }
    for (BlockId in : b.inputs) {
      if (in == id) flag(id, "self-reference", "block lists itself as input");
      if (!a.contains(in)) flag(id, "unknown-input", "input " + std::to_string(in) + " does not exist");
    }
    if (is_output && !a.consumers(id).empty())
      flag(id, "output-as-source", "output blocks must not feed other blocks");
  }

  bool acyclic = true;
  try {
    topological_order(a);
  } catch (const CycleDetected&) {
    acyclic = false;
    flag(0, "cycle", "intra-cell graph contains a cycle");
  }

  // Reachability and hidden-state usage only make sense on an acyclic graph
  // whose references resolve; skip when the structure is already broken.
  bool refs_ok = std::all_of(rep.violations.begin(), rep.violations.end(),
                             [](const Violation& v) { return v.rule != "unknown-input"; });
  if (acyclic && refs_ok) {
    std::set<BlockId> reaches_output;
    std::vector<BlockId> frontier;
    for (const auto& [id, b] : a.blocks()) {
      if (b.kind == BlockKind::OutputH || b.kind == BlockKind::OutputC) {
        reaches_output.insert(id);
        frontier.push_back(id);
      }
    }
    while (!frontier.empty()) {
      BlockId cur = frontier.back();
      frontier.pop_back();
      for (BlockId in : a.at(cur).inputs) {
        if (reaches_output.insert(in).second) frontier.push_back(in);
      }
    }
    for (const auto& [id, b] : a.blocks()) {
      bool hidden = b.kind == BlockKind::Activation || b.kind == BlockKind::Combination || b.kind == BlockKind::ConstOne;
      if (hidden && !reaches_output.count(id))
        flag(id, "dangling-block", "no path to output_h or output_c");
    }

    auto h = a.find_unique(BlockKind::InputH);
    if (h && a.consumers(*h).empty())
      flag(*h, "hidden-state-unused", "no block consumes input_h");
  }

  return rep;
}

// Graphviz render. One node statement per block; one edge per input
// reference. Deterministic ordering (ascending id).
inline std::string to_dot(const Architecture& a) {
  std::string out;
  out += "// cell-dot v1\n";
  out += "digraph \"" + a.identifier + "\" {\n";
  out += "  rankdir=LR;\n";
  for (const auto& [id, b] : a.blocks()) {
    std::string label;
    switch (b.kind) {
      case BlockKind::InputX: label = "x"; break;
      case BlockKind::InputH: label = "h_prev"; break;
      case BlockKind::InputC: label = "c_prev"; break;
      case BlockKind::OutputH: label = "h_next"; break;
      case BlockKind::OutputC: label = "c_next"; break;
      case BlockKind::Activation: label = to_string(b.activation); break;
      case BlockKind::Combination: label = to_string(b.combination); break;
      case BlockKind::ConstOne: label = "1"; break;
    }
    out += "  b" + std::to_string(id) + " [label=\"" + label + "\"];\n";
  }
  for (const auto& [id, b] : a.blocks()) {
    for (BlockId in : b.inputs) out += "  b" + std::to_string(in) + " -> b" + std::to_string(id) + ";\n";
  }
  out += "}\n";
  return out;
}

// Id-invariant structural hash used for duplicate detection in the archive.
// Iterative refinement: each block's color mixes its kind/function with the
// colors of its inputs (sorted for commutative combinations, ordered for
// sub), repeated size() rounds so colors reach across the whole graph.
inline std::uint64_t structural_hash(const Architecture& a) {
  std::map<BlockId, std::uint64_t> color;
  for (const auto& [id, b] : a.blocks()) {
    std::uint64_t base = static_cast<std::uint64_t>(b.kind) * 1315423911ull + 7;
    if (b.kind == BlockKind::Activation) base = combine_hash(base, static_cast<std::uint64_t>(b.activation) + 101);
    if (b.kind == BlockKind::Combination) base = combine_hash(base, static_cast<std::uint64_t>(b.combination) + 201);
    color[id] = mix64(base);
  }
  std::size_t rounds = a.size();
  for (std::size_t r = 0; r < rounds; ++r) {
    std::map<BlockId, std::uint64_t> next;
    for (const auto& [id, b] : a.blocks()) {
      std::vector<std::uint64_t> in_colors;
      for (BlockId in : b.inputs)
        if (a.contains(in)) in_colors.push_back(color.at(in));
      bool commutative = b.kind == BlockKind::Combination &&
                         (b.combination == CombinationFn::Add || b.combination == CombinationFn::ElemMul);
      if (commutative) std::sort(in_colors.begin(), in_colors.end());
      std::uint64_t h = color.at(id);
      for (std::uint64_t c : in_colors) h = combine_hash(h, c);
      next[id] = h;
    }
    color = std::move(next);
  }
  std::vector<std::uint64_t> all;
  all.reserve(color.size());
  for (const auto& [id, c] : color) all.push_back(c);
  std::sort(all.begin(), all.end());
  std::uint64_t h = fnv1a64("cell");
  for (std::uint64_t c : all) h = combine_hash(h, c);
  return h;
}

// ---------------------------------------------------------------------------
// Seed encodings. Layout structs expose the parametric block ids by role so
// tests and tools can address individual weight matrices.

struct BasicRnnLayout {
  BlockId x = 0, h = 0, c = 0, h_next = 0, c_next = 0;
  BlockId wx = 0;      // linear_b on x
  BlockId wh = 0;      // linear_b on h
  BlockId add = 0;
  BlockId tanh = 0;
  BlockId c_pass = 0;  // identity pass-through to c_next
};

// Vanilla RNN: h_t = tanh(W_x x + b_x + W_h h + b_h); cell state passes
// through untouched. 10 blocks.
inline Architecture encode_basic_rnn(BasicRnnLayout* layout = nullptr) {
  Architecture a;
  a.identifier = "BASIC_0";
  BasicRnnLayout l;
  l.x = a.add(BlockKind::InputX);
  l.h = a.add(BlockKind::InputH);
  l.c = a.add(BlockKind::InputC);
  l.wx = a.add_activation(ActivationFn::LinearB, l.x);
  l.wh = a.add_activation(ActivationFn::LinearB, l.h);
  l.add = a.add_combination(CombinationFn::Add, l.wx, l.wh);
  l.tanh = a.add_activation(ActivationFn::Tanh, l.add);
  l.c_pass = a.add_activation(ActivationFn::Identity, l.c);
  l.h_next = a.add(BlockKind::OutputH, {l.tanh});
  l.c_next = a.add(BlockKind::OutputC, {l.c_pass});
  if (layout) *layout = l;
  return a;
}

struct LstmLayout {
  BlockId x = 0, h = 0, c = 0, h_next = 0, c_next = 0;
  // Gate g: sigma(Wxg x + bg + Whg h); candidate n uses tanh.
  BlockId wxf = 0, whf = 0, f = 0;
  BlockId wxi = 0, whi = 0, i = 0;
  BlockId wxo = 0, who = 0, o = 0;
  BlockId wxn = 0, whn = 0, n = 0;
  BlockId fc = 0, in_ = 0, c_new = 0;  // f*c, i*n, f*c + i*n
  BlockId c_tanh = 0, h_new = 0;       // tanh(c_t), o * tanh(c_t)
};

// Standard LSTM, forget/input/output gates plus candidate. 26 blocks:
// 5 io + 4 gates x 4 blocks + 3 for the cell state + 2 for the hidden state.
inline Architecture encode_lstm(LstmLayout* layout = nullptr) {
  Architecture a;
  a.identifier = "LSTM_0";
  LstmLayout l;
  l.x = a.add(BlockKind::InputX);
  l.h = a.add(BlockKind::InputH);
  l.c = a.add(BlockKind::InputC);

  auto gate = [&](ActivationFn squash, BlockId& wx, BlockId& wh, BlockId& out) {
    wx = a.add_activation(ActivationFn::LinearB, l.x);
    wh = a.add_activation(ActivationFn::Linear, l.h);
    BlockId sum = a.add_combination(CombinationFn::Add, wx, wh);
    out = a.add_activation(squash, sum);
  };
  gate(ActivationFn::Sigmoid, l.wxf, l.whf, l.f);
  gate(ActivationFn::Sigmoid, l.wxi, l.whi, l.i);
  gate(ActivationFn::Sigmoid, l.wxo, l.who, l.o);
  gate(ActivationFn::Tanh, l.wxn, l.whn, l.n);

  l.fc = a.add_combination(CombinationFn::ElemMul, l.f, l.c);
  l.in_ = a.add_combination(CombinationFn::ElemMul, l.i, l.n);
  l.c_new = a.add_combination(CombinationFn::Add, l.fc, l.in_);
  l.c_tanh = a.add_activation(ActivationFn::Tanh, l.c_new);
  l.h_new = a.add_combination(CombinationFn::ElemMul, l.o, l.c_tanh);
  l.h_next = a.add(BlockKind::OutputH, {l.h_new});
  l.c_next = a.add(BlockKind::OutputC, {l.c_new});
  if (layout) *layout = l;
  return a;
}

struct GruLayout {
  BlockId x = 0, h = 0, c = 0, h_next = 0, c_next = 0;
  BlockId wxz = 0, whz = 0, z = 0;
  BlockId wxr = 0, whr = 0, r = 0;
  BlockId wxn = 0, rh = 0, wn = 0, n = 0;        // candidate: tanh(Wxn x + bn + Wn (r*h))
  BlockId one = 0, omz = 0, zh = 0, omzn = 0, h_new = 0;
};

// GRU: z and r gates, candidate n = tanh(Wxn x + b + Wn (r*h)), and
// h_t = z*h + (1-z)*n. The unused cell state is passed straight through to
// output_c. 23 blocks: 5 io + 4 + 4 + 5 + 5.
inline Architecture encode_gru(GruLayout* layout = nullptr) {
  Architecture a;
  a.identifier = "GRU_0";
  GruLayout l;
  l.x = a.add(BlockKind::InputX);
  l.h = a.add(BlockKind::InputH);
  l.c = a.add(BlockKind::InputC);

  auto gate = [&](BlockId& wx, BlockId& wh, BlockId& out) {
    wx = a.add_activation(ActivationFn::LinearB, l.x);
    wh = a.add_activation(ActivationFn::Linear, l.h);
    BlockId sum = a.add_combination(CombinationFn::Add, wx, wh);
    out = a.add_activation(ActivationFn::Sigmoid, sum);
  };
  gate(l.wxz, l.whz, l.z);
  gate(l.wxr, l.whr, l.r);

  l.wxn = a.add_activation(ActivationFn::LinearB, l.x);
  l.rh = a.add_combination(CombinationFn::ElemMul, l.r, l.h);
  l.wn = a.add_activation(ActivationFn::Linear, l.rh);
  BlockId nsum = a.add_combination(CombinationFn::Add, l.wxn, l.wn);
  l.n = a.add_activation(ActivationFn::Tanh, nsum);

  l.one = a.add(BlockKind::ConstOne);
  l.omz = a.add_combination(CombinationFn::Sub, l.one, l.z);
  l.zh = a.add_combination(CombinationFn::ElemMul, l.z, l.h);
  l.omzn = a.add_combination(CombinationFn::ElemMul, l.omz, l.n);
  l.h_new = a.add_combination(CombinationFn::Add, l.zh, l.omzn);

  l.h_next = a.add(BlockKind::OutputH, {l.h_new});
  l.c_next = a.add(BlockKind::OutputC, {l.c});
  if (layout) *layout = l;
  return a;
}

// Minimal template random lineages grow from: x and h each pass through a
// plain linear block into a sum, an activation drawn uniformly feeds h_t, and
// the cell path is a plain linear on c. 10 blocks, 2 rng draws in fixed
// order: combination method, then output activation.
inline Architecture new_base_architecture(RandomSource& rng) {
  Architecture a;
  BlockId x = a.add(BlockKind::InputX);
  BlockId h = a.add(BlockKind::InputH);
  BlockId c = a.add(BlockKind::InputC);
  BlockId wx = a.add_activation(ActivationFn::Linear, x);
  BlockId wh = a.add_activation(ActivationFn::Linear, h);
  CombinationFn comb = kAllCombinations[rng.uniform_index(kAllCombinations.size())];
  BlockId merged = a.add_combination(comb, wx, wh);
  ActivationFn act = kAllActivations[rng.uniform_index(kAllActivations.size())];
  BlockId out = a.add_activation(act, merged);
  BlockId wc = a.add_activation(ActivationFn::Linear, c);
  a.add(BlockKind::OutputH, {out});
  a.add(BlockKind::OutputC, {wc});
  return a;
}

}  // namespace evocell
