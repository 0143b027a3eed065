#pragma once

// Independent reference implementations the library is tested against.
// Everything here is written from the cell definitions directly (textbook
// equations, brute-force set logic, finite differences) and deliberately
// avoids the library's compiled-program machinery.

#include <algorithm>
#include <vector>

#include "evocell/arch.hpp"
#include "evocell/cell.hpp"
#include "evocell/nsga2.hpp"

namespace oracles {

using evocell::Mat;
using evocell::Vec;

inline Vec sigmoid(const Vec& v) { return (1.0 / (1.0 + (-v.array()).exp())).matrix(); }
inline Vec tanhv(const Vec& v) { return v.array().tanh().matrix(); }

struct BasicRnnWeights {
  Mat Wx, Wh;
  Vec bx, bh;
};

// h' = tanh((Wx x + bx) + (Wh h + bh)); c' = c.
inline std::pair<Vec, Vec> basic_rnn_step(const BasicRnnWeights& w, const Vec& x, const Vec& h, const Vec& c) {
  Vec hx = w.Wx * x + w.bx;
  Vec hh = w.Wh * h + w.bh;
  Vec h_next = tanhv(hx + hh);
  return {h_next, c};
}

struct LstmWeights {
  Mat Wxf, Whf, Wxi, Whi, Wxo, Who, Wxn, Whn;
  Vec bf, bi, bo, bn;
};

// Standard LSTM with biases on the input-side projections.
inline std::pair<Vec, Vec> lstm_step(const LstmWeights& w, const Vec& x, const Vec& h, const Vec& c) {
  Vec f = sigmoid((w.Wxf * x + w.bf) + (w.Whf * h));
  Vec i = sigmoid((w.Wxi * x + w.bi) + (w.Whi * h));
  Vec o = sigmoid((w.Wxo * x + w.bo) + (w.Who * h));
  Vec n = tanhv((w.Wxn * x + w.bn) + (w.Whn * h));
  Vec c_next = f.cwiseProduct(c) + i.cwiseProduct(n);
  Vec h_next = o.cwiseProduct(tanhv(c_next));
  return {h_next, c_next};
}

struct GruWeights {
  Mat Wxz, Whz, Wxr, Whr, Wxn, Wn;
  Vec bz, br, bn;
};

// GRU with h' = z*h + (1-z)*n and no bias on the gated recurrent projection.
inline std::pair<Vec, Vec> gru_step(const GruWeights& w, const Vec& x, const Vec& h, const Vec& c) {
  Vec z = sigmoid((w.Wxz * x + w.bz) + (w.Whz * h));
  Vec r = sigmoid((w.Wxr * x + w.br) + (w.Whr * h));
  Vec n = tanhv((w.Wxn * x + w.bn) + (w.Wn * r.cwiseProduct(h)));
  Vec one = Vec::Ones(h.size());
  Vec h_next = z.cwiseProduct(h) + (one - z).cwiseProduct(n);
  return {h_next, c};
}

// Brute-force nondominated layering: repeatedly peel the set of points not
// dominated by any remaining point. O(n^2) per layer, used as the oracle for
// the fast sort.
inline std::vector<std::vector<std::size_t>> peel_fronts(const std::vector<evocell::ObjectiveVector>& points) {
  std::vector<std::vector<std::size_t>> fronts;
  std::vector<bool> taken(points.size(), false);
  std::size_t remaining = points.size();
  while (remaining > 0) {
    std::vector<std::size_t> layer;
    for (std::size_t p = 0; p < points.size(); ++p) {
      if (taken[p]) continue;
      bool dominated = false;
      for (std::size_t q = 0; q < points.size(); ++q) {
        if (q == p || taken[q]) continue;
        if (evocell::dominates(points[q], points[p])) {
          dominated = true;
          break;
        }
      }
      if (!dominated) layer.push_back(p);
    }
    for (std::size_t p : layer) taken[p] = true;
    remaining -= layer.size();
    fronts.push_back(std::move(layer));
  }
  return fronts;
}

// Central finite difference of a scalar function of one parameter
// coordinate; the mutation is undone before returning.
template <class Loss>
double finite_difference(double& coord, Loss&& loss, double eps = 1e-5) {
  const double saved = coord;
  coord = saved + eps;
  double up = loss();
  coord = saved - eps;
  double down = loss();
  coord = saved;
  return (up - down) / (2.0 * eps);
}

}  // namespace oracles
