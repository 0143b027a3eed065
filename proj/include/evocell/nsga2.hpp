#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "evocell/errors.hpp"
#include "evocell/rng.hpp"

namespace evocell {

// All objectives are minimized.
struct ObjectiveVector {
  std::vector<double> values;

  ObjectiveVector() = default;
  explicit ObjectiveVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

// a dominates b: no objective worse, at least one strictly better.
inline bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
  if (a.size() != b.size() || a.size() == 0)
    throw ArityMismatch("objective vectors have arity " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()));
  bool strictly_better = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) strictly_better = true;
  }
  return strictly_better;
}

struct Individual {
  std::string identifier;
  ObjectiveVector objectives;
  int rank = 0;            // 1-based front index, assigned by the sort
  double crowding = 0.0;   // +inf on front boundaries
  std::optional<std::string> parent;
};

struct FrontPartition {
  // Indices into the population vector, grouped by front, best front first.
  std::vector<std::vector<std::size_t>> fronts;
};

// Deb's fast nondominated sort. Assigns ranks in place and returns the
// partition. Within a front, population order is preserved.
inline FrontPartition fast_nondominated_sort(std::vector<Individual>& pop) {
  const std::size_t n = pop.size();
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<int> dominators(n, 0);

  FrontPartition part;
  std::vector<std::size_t> current;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q < n; ++q) {
      if (p == q) continue;
      if (dominates(pop[p].objectives, pop[q].objectives)) dominated[p].push_back(q);
      else if (dominates(pop[q].objectives, pop[p].objectives)) ++dominators[p];
    }
    if (dominators[p] == 0) {
      pop[p].rank = 1;
      current.push_back(p);
    }
  }

  int rank = 1;
  while (!current.empty()) {
    part.fronts.push_back(current);
    std::vector<std::size_t> next;
    for (std::size_t p : current) {
      for (std::size_t q : dominated[p]) {
        if (--dominators[q] == 0) {
          pop[q].rank = rank + 1;
          next.push_back(q);
        }
      }
    }
    std::sort(next.begin(), next.end());
    current = std::move(next);
    ++rank;
  }
  return part;
}

// Crowding distance within one front. Boundary points per objective get
// +inf; when an objective is constant across the front its normalized spread
// is zero and it contributes nothing.
inline void crowding_distance(std::vector<Individual>& pop, const std::vector<std::size_t>& front) {
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i : front) pop[i].crowding = 0.0;
  if (front.empty()) return;
  if (front.size() <= 2) {
    for (std::size_t i : front) pop[i].crowding = inf;
    return;
  }
  const std::size_t m = pop[front[0]].objectives.size();
  for (std::size_t obj = 0; obj < m; ++obj) {
    std::vector<std::size_t> order = front;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      double va = pop[a].objectives[obj], vb = pop[b].objectives[obj];
      if (va != vb) return va < vb;
      return pop[a].identifier < pop[b].identifier;  // stable under duplicates
    });
    double lo = pop[order.front()].objectives[obj];
    double hi = pop[order.back()].objectives[obj];
    double spread = hi - lo;
    if (spread <= 0.0) continue;  // constant objective contributes nothing
    pop[order.front()].crowding = inf;
    pop[order.back()].crowding = inf;
    for (std::size_t k = 1; k + 1 < order.size(); ++k) {
      double gap = pop[order[k + 1]].objectives[obj] - pop[order[k - 1]].objectives[obj];
      pop[order[k]].crowding += gap / spread;
    }
  }
}

// Assigns ranks and crowding for the whole population.
inline FrontPartition sort_population(std::vector<Individual>& pop) {
  FrontPartition part = fast_nondominated_sort(pop);
  for (const auto& front : part.fronts) crowding_distance(pop, front);
  return part;
}

// True when a is preferred over b: lower rank, then larger crowding, then
// lexicographically smaller identifier. Total order for distinct identifiers,
// which keeps every downstream selection deterministic.
inline bool crowded_before(const Individual& a, const Individual& b) {
  if (a.rank != b.rank) return a.rank < b.rank;
  if (a.crowding != b.crowding) return a.crowding > b.crowding;
  return a.identifier < b.identifier;
}

// Binary tournaments with replacement. Requires ranks and crowding assigned.
inline std::vector<std::size_t> tournament_selection(const std::vector<Individual>& pop, std::size_t count,
                                                     RandomSource& rng) {
  if (pop.empty()) throw EmptyPopulation("tournament selection over an empty population");
  std::vector<std::size_t> winners;
  winners.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    std::size_t i = rng.uniform_index(pop.size());
    std::size_t j = rng.uniform_index(pop.size());
    winners.push_back(crowded_before(pop[j], pop[i]) ? j : i);
  }
  return winners;
}

// Elitist environmental selection: fill whole fronts while they fit, then
// truncate the overflow front by descending crowding (computed on the full
// front). Returns exactly n individuals with fresh ranks and crowding.
inline std::vector<Individual> survivor_selection(std::vector<Individual> combined, std::size_t n) {
  if (combined.size() < n)
    throw InsufficientPopulation("need " + std::to_string(n) + " survivors from " +
                                 std::to_string(combined.size()) + " candidates");
  FrontPartition part = sort_population(combined);

  std::vector<Individual> out;
  out.reserve(n);
  for (const auto& front : part.fronts) {
    if (out.size() + front.size() <= n) {
      for (std::size_t i : front) out.push_back(combined[i]);
      if (out.size() == n) break;
    } else {
      std::vector<std::size_t> order = front;
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return crowded_before(combined[a], combined[b]); });
      for (std::size_t k = 0; out.size() < n; ++k) out.push_back(combined[order[k]]);
      break;
    }
  }
  return out;
}

// Top `cap` individuals under the crowded comparator; the whole population
// when cap is at least its size. Requires ranks and crowding assigned.
inline std::vector<Individual> max_parents_cap(const std::vector<Individual>& pop, std::size_t cap) {
  if (cap >= pop.size()) return pop;
  std::vector<Individual> sorted = pop;
  std::sort(sorted.begin(), sorted.end(), crowded_before);
  sorted.resize(cap);
  return sorted;
}

}  // namespace evocell
