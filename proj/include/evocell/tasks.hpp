#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "evocell/cell.hpp"
#include "evocell/errors.hpp"
#include "evocell/rng.hpp"

namespace evocell {

// Fixed task vocabulary: the three letters plus an end-of-sequence marker.
struct SymbolAlphabet {
  std::vector<char> symbols;

  int width() const { return static_cast<int>(symbols.size()); }

  int index(char c) const {
    for (std::size_t i = 0; i < symbols.size(); ++i)
      if (symbols[i] == c) return static_cast<int>(i);
    throw InvalidRange(std::string("symbol '") + c + "' is not in the alphabet");
  }

  Vec one_hot(char c) const {
    Vec v = Vec::Zero(width());
    v[index(c)] = 1.0;
    return v;
  }

  char eos() const { return symbols.back(); }
};

inline SymbolAlphabet anbncn_alphabet() { return {{'a', 'b', 'c', '$'}}; }

// Strings of the context-sensitive counting language: n a's, n b's, n c's,
// with n drawn uniformly per string.
inline std::vector<std::string> generate_anbncn(int count, int n_min, int n_max, RandomSource& rng) {
  if (count < 0 || n_min < 1 || n_max < n_min)
    throw InvalidRange("bad generator parameters: count " + std::to_string(count) + ", n in [" +
                       std::to_string(n_min) + ", " + std::to_string(n_max) + "]");
  std::vector<std::string> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    int n = rng.uniform_int(n_min, n_max);
    std::string s;
    s.reserve(3 * n);
    s.append(n, 'a').append(n, 'b').append(n, 'c');
    out.push_back(std::move(s));
  }
  return out;
}

// A string with a prediction split: the prefix is given, the suffix plus the
// end marker must be produced. The cut point is uniform over [ceil(L/2),
// L-1]: the shown prefix spans at least half the string, which for counting
// strings always includes the a-to-b boundary, so the continuation is fully
// determined by the prefix and generation is a well-posed prediction task.
struct SequenceSample {
  std::string full;
  int cut = 0;

  std::string prefix() const { return full.substr(0, cut); }
  std::string suffix() const { return full.substr(cut); }
};

inline SequenceSample make_sample(const std::string& s, RandomSource& rng) {
  if (s.size() < 2) throw StringTooShort("need at least 2 symbols to split, got '" + s + "'");
  const int len = static_cast<int>(s.size());
  SequenceSample sample;
  sample.full = s;
  sample.cut = rng.uniform_int((len + 1) / 2, len - 1);
  return sample;
}

// Teacher-forced view of a string. Inputs are the one-hot symbols of the
// full string; the target at every step is the next symbol, with the end
// marker as the final target. Prediction cuts only exist at evaluation time.
inline TrainItem make_train_item(const std::string& s, const SymbolAlphabet& alphabet) {
  TrainItem item;
  item.inputs.reserve(s.size());
  for (char c : s) item.inputs.push_back(alphabet.one_hot(c));
  for (int t = 0; t < static_cast<int>(s.size()); ++t) {
    char target = (t + 1 < static_cast<int>(s.size())) ? s[t + 1] : alphabet.eos();
    item.targets.emplace_back(t, alphabet.one_hot(target));
  }
  return item;
}

inline std::vector<TrainItem> make_train_items(const std::vector<SequenceSample>& samples,
                                               const SymbolAlphabet& alphabet) {
  std::vector<TrainItem> items;
  items.reserve(samples.size());
  for (const auto& s : samples) items.push_back(make_train_item(s.full, alphabet));
  return items;
}

struct TaskModel {
  CellProgram program;
  ParamStore params;  // includes the readout head under kReadoutBlockId
};

// Everything a run needs: fixed prediction cuts for both splits and the
// teacher-forced training items. Cuts are drawn once (train first, then
// test) so reruns see identical data; only evaluation consults them.
struct TaskData {
  SymbolAlphabet alphabet;
  std::vector<SequenceSample> train;
  std::vector<SequenceSample> test;
  std::vector<TrainItem> train_items;
};

inline TaskData build_task_data(const std::vector<std::string>& train_strings,
                                const std::vector<std::string>& test_strings, RandomSource& rng) {
  TaskData data;
  data.alphabet = anbncn_alphabet();
  data.train.reserve(train_strings.size());
  data.test.reserve(test_strings.size());
  for (const auto& s : train_strings) data.train.push_back(make_sample(s, rng));
  for (const auto& s : test_strings) data.test.push_back(make_sample(s, rng));
  data.train_items = make_train_items(data.train, data.alphabet);
  return data;
}

namespace detail {

inline int argmax(const Vec& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Walks one sample in generation mode: the prefix is fed as given, then the
// model's own argmax prediction becomes the next input. Calls visit(pred,
// target_index) once per predicted position (suffix symbols, then the end
// marker).
template <class Visit>
void walk_sample(const TaskModel& model, const SequenceSample& sample, const SymbolAlphabet& alphabet,
                 Visit&& visit) {
  StepState state = zero_state(model.program.dims);
  Vec input = alphabet.one_hot(sample.full[0]);
  for (int t = 1; t < sample.cut; ++t) {
    state = forward_step(model.program, model.params, input, state);
    input = alphabet.one_hot(sample.full[t]);
  }
  const int total = static_cast<int>(sample.full.size());
  for (int t = sample.cut - 1; t < total; ++t) {
    state = forward_step(model.program, model.params, input, state);
    Vec y = readout_output(model.params, state.h);
    if (!y.allFinite()) throw NonFiniteValue("readout produced a non-finite prediction");
    int target = (t + 1 < total) ? alphabet.index(sample.full[t + 1]) : alphabet.index(alphabet.eos());
    visit(y, target);
    if (t + 1 < total) input = alphabet.one_hot(alphabet.symbols[argmax(y)]);
  }
}

}  // namespace detail

// Mean squared error against one-hot targets, pooled over every predicted
// position of every sample. The model sees its own argmax predictions as
// inputs past the cut, not the ground truth.
inline double evaluate_sequence_mse(const TaskModel& model, const std::vector<SequenceSample>& samples,
                                    const SymbolAlphabet& alphabet) {
  double total = 0.0;
  std::size_t positions = 0;
  for (const auto& sample : samples) {
    detail::walk_sample(model, sample, alphabet, [&](const Vec& y, int target) {
      total += mse_loss(y, alphabet.one_hot(alphabet.symbols[target])).first;
      ++positions;
    });
  }
  if (positions == 0) throw LengthMismatch("no predicted positions to evaluate");
  return total / static_cast<double>(positions);
}

// Fraction of predicted positions whose argmax matches the target.
inline double sequence_accuracy(const TaskModel& model, const std::vector<SequenceSample>& samples,
                                const SymbolAlphabet& alphabet) {
  std::size_t hits = 0, positions = 0;
  for (const auto& sample : samples) {
    detail::walk_sample(model, sample, alphabet, [&](const Vec& y, int target) {
      if (detail::argmax(y) == target) ++hits;
      ++positions;
    });
  }
  if (positions == 0) throw LengthMismatch("no predicted positions to evaluate");
  return static_cast<double>(hits) / static_cast<double>(positions);
}

// Perplexity from per-position cross entropies (natural log): exp of their
// mean. A uniform model over V symbols scores V; a perfectly certain and
// correct one scores 1.
inline double perplexity(const std::vector<double>& entropies) {
  if (entropies.empty()) throw LengthMismatch("perplexity of an empty entropy list");
  double sum = 0.0;
  for (double e : entropies) {
    if (!std::isfinite(e)) throw NonFiniteValue("non-finite entropy entry");
    sum += e;
  }
  double pp = std::exp(sum / static_cast<double>(entropies.size()));
  if (!std::isfinite(pp)) throw NonFiniteValue("perplexity overflowed");
  return pp;
}

}  // namespace evocell
