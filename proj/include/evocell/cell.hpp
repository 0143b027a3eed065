#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "evocell/arch.hpp"
#include "evocell/errors.hpp"
#include "evocell/rng.hpp"

namespace evocell {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// The readout head (hidden state -> task output) is stored in the same
// parameter store as the cell, under an id no cell block can own.
inline constexpr BlockId kReadoutBlockId = 0;

struct CellDims {
  int input_dim = 1;
  int hidden_dim = 1;
};

// One executable step. Non-output cell blocks compile to exactly one
// instruction; io inputs are preset slots and output blocks are aliases.
struct Instruction {
  BlockId block = 0;
  BlockKind kind = BlockKind::Activation;
  ActivationFn act = ActivationFn::Identity;
  CombinationFn comb = CombinationFn::Add;
  int out = -1;               // slot written
  int in0 = -1, in1 = -1;     // slots read
  int width = 0;              // width of the written slot
};

struct CellProgram {
  CellDims dims;
  double leaky_slope = 0.01;
  std::vector<Instruction> code;    // topological order
  std::vector<int> slot_width;
  int x_slot = -1, h_slot = -1, c_slot = -1;
  int h_out = -1, c_out = -1;       // slots whose values become the next h and c
  std::map<BlockId, int> slot_of;   // cell block id -> slot (output blocks excluded)
};

inline bool is_parametric(const Instruction& ins) {
  return ins.kind == BlockKind::Activation &&
         (ins.act == ActivationFn::Linear || ins.act == ActivationFn::LinearB);
}

// Lowers a valid architecture to straight-line code, propagating widths:
// x is input_dim wide, h/c/const-one are hidden_dim, linear blocks project to
// hidden_dim, everything else preserves its input width. Width conflicts at
// combinations or outputs raise ShapeError.
inline CellProgram compile(const Architecture& a, CellDims dims, double leaky_slope = 0.01) {
  CellProgram prog;
  prog.dims = dims;
  prog.leaky_slope = leaky_slope;
  if (dims.input_dim < 1 || dims.hidden_dim < 1) throw ShapeError("cell dimensions must be positive");

  std::vector<BlockId> order = topological_order(a);

  auto width_of = [&prog](BlockId id) { return prog.slot_width[prog.slot_of.at(id)]; };

  for (BlockId id : order) {
    const Block& b = a.at(id);
    switch (b.kind) {
      case BlockKind::InputX:
      case BlockKind::InputH:
      case BlockKind::InputC: {
        int slot = static_cast<int>(prog.slot_width.size());
        prog.slot_width.push_back(b.kind == BlockKind::InputX ? dims.input_dim : dims.hidden_dim);
        prog.slot_of[id] = slot;
        if (b.kind == BlockKind::InputX) prog.x_slot = slot;
        if (b.kind == BlockKind::InputH) prog.h_slot = slot;
        if (b.kind == BlockKind::InputC) prog.c_slot = slot;
        break;
      }
      case BlockKind::OutputH:
      case BlockKind::OutputC: {
        if (b.inputs.size() != 1) throw ShapeError("output block " + std::to_string(id) + " must have one input");
        int src = prog.slot_of.at(b.inputs[0]);
        if (prog.slot_width[src] != dims.hidden_dim)
          throw ShapeError("block " + std::to_string(b.inputs[0]) + " feeds " + to_string(b.kind) + " with width " +
                           std::to_string(prog.slot_width[src]) + ", expected hidden_dim " +
                           std::to_string(dims.hidden_dim));
        (b.kind == BlockKind::OutputH ? prog.h_out : prog.c_out) = src;
        break;
      }
      case BlockKind::ConstOne: {
        Instruction ins;
        ins.block = id;
        ins.kind = b.kind;
        ins.width = dims.hidden_dim;
        ins.out = static_cast<int>(prog.slot_width.size());
        prog.slot_width.push_back(ins.width);
        prog.slot_of[id] = ins.out;
        prog.code.push_back(ins);
        break;
      }
      case BlockKind::Activation: {
        if (b.inputs.size() != 1) throw ShapeError("activation block " + std::to_string(id) + " must have one input");
        Instruction ins;
        ins.block = id;
        ins.kind = b.kind;
        ins.act = b.activation;
        ins.in0 = prog.slot_of.at(b.inputs[0]);
        bool linear = b.activation == ActivationFn::Linear || b.activation == ActivationFn::LinearB;
        ins.width = linear ? dims.hidden_dim : prog.slot_width[ins.in0];
        ins.out = static_cast<int>(prog.slot_width.size());
        prog.slot_width.push_back(ins.width);
        prog.slot_of[id] = ins.out;
        prog.code.push_back(ins);
        break;
      }
      case BlockKind::Combination: {
        if (b.inputs.size() != 2)
          throw ShapeError("combination block " + std::to_string(id) + " must have two inputs");
        Instruction ins;
        ins.block = id;
        ins.kind = b.kind;
        ins.comb = b.combination;
        ins.in0 = prog.slot_of.at(b.inputs[0]);
        ins.in1 = prog.slot_of.at(b.inputs[1]);
        if (prog.slot_width[ins.in0] != prog.slot_width[ins.in1])
          throw ShapeError("combination block " + std::to_string(id) + " joins widths " +
                           std::to_string(prog.slot_width[ins.in0]) + " and " +
                           std::to_string(prog.slot_width[ins.in1]));
        ins.width = prog.slot_width[ins.in0];
        ins.out = static_cast<int>(prog.slot_width.size());
        prog.slot_width.push_back(ins.width);
        prog.slot_of[id] = ins.out;
        prog.code.push_back(ins);
        break;
      }
    }
  }
  if (prog.x_slot < 0 || prog.h_slot < 0 || prog.c_slot < 0 || prog.h_out < 0 || prog.c_out < 0)
    throw ShapeError("architecture is missing io blocks");
  return prog;
}

struct ParamEntry {
  Mat W;
  std::optional<Vec> b;  // engaged for linear_b and the readout

  std::size_t count() const { return static_cast<std::size_t>(W.size()) + (b ? static_cast<std::size_t>(b->size()) : 0); }
  bool same_shape(const ParamEntry& o) const {
    return W.rows() == o.W.rows() && W.cols() == o.W.cols() && b.has_value() == o.b.has_value() &&
           (!b || b->size() == o.b->size());
  }
};

struct ParamStore {
  std::map<BlockId, ParamEntry> entries;

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& [id, e] : entries) n += e.count();
    return n;
  }
};

// Trainable parameter count of the cell itself (readout head excluded).
inline std::size_t param_count(const CellProgram& prog) {
  std::size_t n = 0;
  for (const auto& ins : prog.code) {
    if (!is_parametric(ins)) continue;
    std::size_t rows = static_cast<std::size_t>(ins.width);
    std::size_t cols = static_cast<std::size_t>(prog.slot_width[ins.in0]);
    n += rows * cols + (ins.act == ActivationFn::LinearB ? rows : 0);
  }
  return n;
}

namespace detail {

inline void fill_uniform(Mat& m, double bound, RandomSource& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform_real(-bound, bound);
}

}  // namespace detail

// Parameter initialization with optional inheritance. Without a parent every
// weight is uniform in [-1/sqrt(hidden), +1/sqrt(hidden)] and biases are
// zero. With a parent, tensors are copied by block id when shapes agree;
// blocks the parent lacks (or whose shape changed under the morphism) start
// fresh: identity for square weights so splices preserve the function,
// uniform otherwise.
inline ParamStore init_params(const CellProgram& prog, RandomSource& rng, const ParamStore* parent = nullptr) {
  ParamStore store;
  const double bound = 1.0 / std::sqrt(static_cast<double>(prog.dims.hidden_dim));
  for (const auto& ins : prog.code) {
    if (!is_parametric(ins)) continue;
    ParamEntry e;
    e.W = Mat::Zero(ins.width, prog.slot_width[ins.in0]);
    if (ins.act == ActivationFn::LinearB) e.b = Vec::Zero(ins.width);

    const ParamEntry* inherited = nullptr;
    if (parent) {
      auto it = parent->entries.find(ins.block);
      if (it != parent->entries.end() && it->second.same_shape(e)) inherited = &it->second;
    }
    if (inherited) {
      e = *inherited;
    } else if (parent && e.W.rows() == e.W.cols()) {
      e.W.setIdentity();
    } else {
      detail::fill_uniform(e.W, bound, rng);
    }
    store.entries.emplace(ins.block, std::move(e));
  }
  return store;
}

// Adds (or inherits) the readout head: rows x hidden weight plus bias.
inline void ensure_readout(ParamStore& store, int rows, int hidden_dim, RandomSource& rng,
                           const ParamStore* parent = nullptr) {
  ParamEntry e;
  e.W = Mat::Zero(rows, hidden_dim);
  e.b = Vec::Zero(rows);
  if (parent) {
    auto it = parent->entries.find(kReadoutBlockId);
    if (it != parent->entries.end() && it->second.same_shape(e)) {
      store.entries[kReadoutBlockId] = it->second;
      return;
    }
  }
  detail::fill_uniform(e.W, 1.0 / std::sqrt(static_cast<double>(hidden_dim)), rng);
  store.entries[kReadoutBlockId] = std::move(e);
}

struct StepState {
  Vec h;
  Vec c;
};

inline StepState zero_state(const CellDims& dims) {
  return {Vec::Zero(dims.hidden_dim), Vec::Zero(dims.hidden_dim)};
}

// Slot values for one step, kept for the backward pass.
using StepTrace = std::vector<Vec>;

struct Tape {
  std::vector<StepTrace> steps;
};

namespace detail {

inline void check_finite(const Vec& v, BlockId block) {
  if (!v.allFinite())
    throw NonFiniteValue("block " + std::to_string(block) + " produced a non-finite value");
}

inline void exec_step(const CellProgram& prog, const ParamStore& params, StepTrace& slots) {
  for (const auto& ins : prog.code) {
    Vec& out = slots[ins.out];
    switch (ins.kind) {
      case BlockKind::ConstOne: out = Vec::Ones(ins.width); break;
      case BlockKind::Activation: {
        const Vec& in = slots[ins.in0];
        switch (ins.act) {
          case ActivationFn::LinearB: {
            const ParamEntry& e = params.entries.at(ins.block);
            out.noalias() = e.W * in;
            out += *e.b;
            break;
          }
          case ActivationFn::Linear: out.noalias() = params.entries.at(ins.block).W * in; break;
          case ActivationFn::Identity: out = in; break;
          case ActivationFn::Sigmoid: out = (1.0 / (1.0 + (-in.array()).exp())).matrix(); break;
          case ActivationFn::Tanh: out = in.array().tanh().matrix(); break;
          case ActivationFn::Relu: out = in.cwiseMax(0.0); break;
          case ActivationFn::LeakyRelu:
            out = in.unaryExpr([s = prog.leaky_slope](double v) { return v < 0.0 ? s * v : v; });
            break;
        }
        break;
      }
      case BlockKind::Combination: {
        const Vec& a = slots[ins.in0];
        const Vec& b = slots[ins.in1];
        switch (ins.comb) {
          case CombinationFn::Add: out = a + b; break;
          case CombinationFn::Sub: out = a - b; break;
          case CombinationFn::ElemMul: out = a.cwiseProduct(b); break;
        }
        break;
      }
      default: break;
    }
    check_finite(out, ins.block);
  }
}

}  // namespace detail

// One recurrence step. The optional trace receives every slot value.
inline StepState forward_step(const CellProgram& prog, const ParamStore& params, const Vec& x,
                              const StepState& state, StepTrace* trace = nullptr) {
  if (x.size() != prog.dims.input_dim) throw ShapeError("input vector has wrong width");
  if (state.h.size() != prog.dims.hidden_dim || state.c.size() != prog.dims.hidden_dim)
    throw ShapeError("state vectors have wrong width");

  StepTrace slots(prog.slot_width.size());
  slots[prog.x_slot] = x;
  slots[prog.h_slot] = state.h;
  slots[prog.c_slot] = state.c;
  detail::exec_step(prog, params, slots);

  StepState next{slots[prog.h_out], slots[prog.c_out]};
  if (trace) *trace = std::move(slots);
  return next;
}

struct UnrollResult {
  std::vector<StepState> states;  // state after each step
  Tape tape;
};

inline UnrollResult unroll(const CellProgram& prog, const ParamStore& params, const std::vector<Vec>& xs,
                           StepState state, bool keep_tape = true) {
  UnrollResult res;
  res.states.reserve(xs.size());
  if (keep_tape) res.tape.steps.resize(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    try {
      state = forward_step(prog, params, xs[t], state, keep_tape ? &res.tape.steps[t] : nullptr);
    } catch (const NonFiniteValue& e) {
      throw NonFiniteValue(std::string(e.what()) + " at step " + std::to_string(t));
    }
    res.states.push_back(state);
  }
  return res;
}

// Loss gradients flowing into the cell outputs per step. Empty vectors mean
// zero gradient at that step.
struct OutputGrads {
  std::vector<Vec> dh;
  std::vector<Vec> dc;
};

// Reverse-mode sweep over an unrolled sequence. Returns parameter gradients;
// adjoints of h and c are carried backwards across steps, so gradients flow
// through the recurrence exactly.
inline ParamStore backward(const CellProgram& prog, const ParamStore& params, const Tape& tape,
                           const OutputGrads& grads) {
  const std::size_t T = tape.steps.size();
  ParamStore g;
  for (const auto& [id, e] : params.entries) {
    if (id == kReadoutBlockId) continue;
    ParamEntry ge;
    ge.W = Mat::Zero(e.W.rows(), e.W.cols());
    if (e.b) ge.b = Vec::Zero(e.b->size());
    g.entries.emplace(id, std::move(ge));
  }

  Vec dh_carry = Vec::Zero(prog.dims.hidden_dim);
  Vec dc_carry = Vec::Zero(prog.dims.hidden_dim);
  std::vector<Vec> dslot(prog.slot_width.size());

  for (std::size_t ti = T; ti-- > 0;) {
    const StepTrace& slots = tape.steps[ti];
    for (std::size_t s = 0; s < dslot.size(); ++s) dslot[s] = Vec::Zero(prog.slot_width[s]);

    dslot[prog.h_out] += dh_carry;
    dslot[prog.c_out] += dc_carry;
    if (ti < grads.dh.size() && grads.dh[ti].size() > 0) dslot[prog.h_out] += grads.dh[ti];
    if (ti < grads.dc.size() && grads.dc[ti].size() > 0) dslot[prog.c_out] += grads.dc[ti];

    for (auto it = prog.code.rbegin(); it != prog.code.rend(); ++it) {
      const Instruction& ins = *it;
      const Vec& dy = dslot[ins.out];
      switch (ins.kind) {
        case BlockKind::ConstOne: break;
        case BlockKind::Activation: {
          const Vec& in = slots[ins.in0];
          const Vec& out = slots[ins.out];
          switch (ins.act) {
            case ActivationFn::LinearB: {
              ParamEntry& ge = g.entries.at(ins.block);
              ge.W.noalias() += dy * in.transpose();
              *ge.b += dy;
              dslot[ins.in0].noalias() += params.entries.at(ins.block).W.transpose() * dy;
              break;
            }
            case ActivationFn::Linear: {
              ParamEntry& ge = g.entries.at(ins.block);
              ge.W.noalias() += dy * in.transpose();
              dslot[ins.in0].noalias() += params.entries.at(ins.block).W.transpose() * dy;
              break;
            }
            case ActivationFn::Identity: dslot[ins.in0] += dy; break;
            case ActivationFn::Sigmoid:
              dslot[ins.in0] += dy.cwiseProduct(out.cwiseProduct((1.0 - out.array()).matrix()));
              break;
            case ActivationFn::Tanh:
              dslot[ins.in0] += dy.cwiseProduct((1.0 - out.array().square()).matrix());
              break;
            case ActivationFn::Relu:
              dslot[ins.in0] += dy.cwiseProduct(in.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
              break;
            case ActivationFn::LeakyRelu:
              dslot[ins.in0] +=
                  dy.cwiseProduct(in.unaryExpr([s = prog.leaky_slope](double v) { return v < 0.0 ? s : 1.0; }));
              break;
          }
          break;
        }
        case BlockKind::Combination: {
          switch (ins.comb) {
            case CombinationFn::Add:
              dslot[ins.in0] += dy;
              dslot[ins.in1] += dy;
              break;
            case CombinationFn::Sub:
              dslot[ins.in0] += dy;
              dslot[ins.in1] -= dy;
              break;
            case CombinationFn::ElemMul:
              dslot[ins.in0] += dy.cwiseProduct(slots[ins.in1]);
              dslot[ins.in1] += dy.cwiseProduct(slots[ins.in0]);
              break;
          }
          break;
        }
        default: break;
      }
    }
    dh_carry = dslot[prog.h_slot];
    dc_carry = dslot[prog.c_slot];
  }
  return g;
}

inline std::pair<double, Vec> mse_loss(const Vec& pred, const Vec& target) {
  if (pred.size() != target.size()) throw LengthMismatch("mse over vectors of different length");
  Vec diff = pred - target;
  double n = static_cast<double>(pred.size());
  return {diff.squaredNorm() / n, (2.0 / n) * diff};
}

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 30;
  std::optional<double> clip_norm = 5.0;  // global norm across all tensors
  std::uint64_t rng_seed = 0;             // orders the per-epoch shuffles
};

// Plain SGD with optional global-norm clipping, applied in place.
inline void sgd_step(ParamStore& params, const ParamStore& grads, const TrainConfig& cfg) {
  double scale = 1.0;
  if (cfg.clip_norm) {
    double sq = 0.0;
    for (const auto& [id, ge] : grads.entries) {
      sq += ge.W.squaredNorm();
      if (ge.b) sq += ge.b->squaredNorm();
    }
    double norm = std::sqrt(sq);
    if (norm > *cfg.clip_norm && norm > 0.0) scale = *cfg.clip_norm / norm;
  }
  double step = cfg.learning_rate * scale;
  for (auto& [id, e] : params.entries) {
    auto it = grads.entries.find(id);
    if (it == grads.entries.end()) continue;
    e.W -= step * it->second.W;
    if (e.b && it->second.b) *e.b -= step * *it->second.b;
  }
}

// A teacher-forced sequence: inputs for every step, targets attached to the
// steps whose readout participates in the loss.
struct TrainItem {
  std::vector<Vec> inputs;
  std::vector<std::pair<int, Vec>> targets;  // (step index, expected output)
};

inline Vec readout_output(const ParamStore& params, const Vec& h) {
  const ParamEntry& e = params.entries.at(kReadoutBlockId);
  Vec z = e.W * h + *e.b;
  return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

// Mean MSE over the item's target positions, teacher forced. Also exposes the
// per-position readout gradients when asked, so training and the
// finite-difference oracle share one code path.
inline double sequence_loss_and_grads(const CellProgram& prog, const ParamStore& params, const TrainItem& item,
                                      ParamStore* grads_out) {
  if (item.targets.empty()) throw LengthMismatch("train item has no targets");
  UnrollResult rolled = unroll(prog, params, item.inputs, zero_state(prog.dims), grads_out != nullptr);

  const ParamEntry& head = params.entries.at(kReadoutBlockId);
  const double scale = 1.0 / static_cast<double>(item.targets.size());

  OutputGrads ograds;
  Mat dW = Mat::Zero(head.W.rows(), head.W.cols());
  Vec db = Vec::Zero(head.b->size());
  if (grads_out) ograds.dh.resize(item.inputs.size());

  double loss = 0.0;
  for (const auto& [step, target] : item.targets) {
    const Vec& h = rolled.states.at(static_cast<std::size_t>(step)).h;
    Vec y = readout_output(params, h);
    auto [l, dy] = mse_loss(y, target);
    if (!std::isfinite(l)) throw NonFiniteValue("loss is non-finite at step " + std::to_string(step));
    loss += l * scale;
    if (!grads_out) continue;
    Vec dz = dy.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())) * scale;
    dW.noalias() += dz * h.transpose();
    db += dz;
    Vec dh = head.W.transpose() * dz;
    if (ograds.dh[step].size() == 0) ograds.dh[step] = dh;
    else ograds.dh[step] += dh;
  }

  if (grads_out) {
    *grads_out = backward(prog, params, rolled.tape, ograds);
    ParamEntry ge;
    ge.W = std::move(dW);
    ge.b = std::move(db);
    grads_out->entries.emplace(kReadoutBlockId, std::move(ge));
  }
  return loss;
}

inline double sequence_loss(const CellProgram& prog, const ParamStore& params, const TrainItem& item) {
  return sequence_loss_and_grads(prog, params, item, nullptr);
}

struct TrainResult {
  std::vector<double> epoch_loss;  // mean per-sequence loss, one entry per completed epoch
  bool diverged = false;
  int diverged_epoch = -1;
};

// One SGD step per sequence, sequences shuffled each epoch. Any non-finite
// value aborts training with the diverged flag set; params keep their last
// finite values and the caller decides how to score the run.
inline TrainResult train(const CellProgram& prog, ParamStore& params, const std::vector<TrainItem>& items,
                         const TrainConfig& cfg) {
  TrainResult res;
  if (items.empty() || cfg.epochs <= 0) return res;
  RandomSource order_rng = RandomSource(cfg.rng_seed).derive("epoch-order");

  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    ParamStore checkpoint = params;  // restored on divergence so callers never see NaN weights
    double total = 0.0;
    for (std::size_t idx : order) {
      ParamStore grads;
      try {
        total += sequence_loss_and_grads(prog, params, items[idx], &grads);
      } catch (const NonFiniteValue&) {
        params = std::move(checkpoint);
        res.diverged = true;
        res.diverged_epoch = epoch;
        return res;
      }
      sgd_step(params, grads, cfg);
    }
    res.epoch_loss.push_back(total / static_cast<double>(items.size()));
  }
  return res;
}

}  // namespace evocell
