#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "evocell/arch.hpp"
#include "evocell/cell.hpp"
#include "evocell/errors.hpp"
#include "evocell/morphism.hpp"
#include "evocell/nsga2.hpp"
#include "evocell/rng.hpp"
#include "evocell/tasks.hpp"

namespace evocell {

struct EpochBudgetConfig {
  int full_epochs = 30;
  int reduced_epochs = 5;
  double divergence_threshold = 0.02;  // on the test-loss scale
};

// Offspring whose inherited weights already behave like the parent get the
// reduced budget; everything else (no parent, shifted behavior, or a broken
// initial evaluation) trains for the full budget.
inline int epoch_budget(std::optional<double> parent_metric, std::optional<double> offspring_initial,
                        const EpochBudgetConfig& cfg) {
  if (!parent_metric) return cfg.full_epochs;
  if (!offspring_initial || !std::isfinite(*offspring_initial)) return cfg.full_epochs;
  if (std::abs(*offspring_initial - *parent_metric) > cfg.divergence_threshold) return cfg.full_epochs;
  return cfg.reduced_epochs;
}

inline const std::vector<std::string>& known_seed_names() {
  static const std::vector<std::string> names = {"basic_rnn", "lstm", "gru"};
  return names;
}

inline Architecture encode_seed(const std::string& name) {
  if (name == "basic_rnn") return encode_basic_rnn();
  if (name == "lstm") return encode_lstm();
  if (name == "gru") return encode_gru();
  throw ConfigError("unknown seed '" + name + "'");
}

struct SearchConfig {
  int population_size = 20;
  int offspring_per_generation = 20;
  int max_parents = 20;
  int max_transforms = 3;
  int generations = 10;
  std::vector<std::string> seeds = {"basic_rnn"};
  std::uint64_t rng_seed = 1;
  std::optional<double> penalty_loss;  // default: 10x the worst finite loss of generation 0
  EpochBudgetConfig budget;

  int hidden_dim = 32;
  double learning_rate = 0.01;
  std::optional<double> clip_norm = 5.0;
  double leaky_slope = 0.01;

  std::vector<std::string> objectives = {"test_loss", "block_count"};
  int workers = 1;  // 0 = hardware concurrency

  void check() const {
    if (population_size < 1) throw ConfigError("population_size must be >= 1");
    if (generations < 0) throw ConfigError("generations must be >= 0");
    if (generations > 0 && offspring_per_generation < 1)
      throw ConfigError("offspring_per_generation must be >= 1");
    if (max_parents < 1) throw ConfigError("max_parents must be >= 1");
    if (max_transforms < 1) throw ConfigError("max_transforms must be >= 1");
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("clip_norm must be positive when set");
    if (budget.full_epochs < 0 || budget.reduced_epochs < 0) throw ConfigError("epoch budgets must be >= 0");
    if (!(budget.divergence_threshold >= 0.0)) throw ConfigError("divergence_threshold must be >= 0");
    if (penalty_loss && !(*penalty_loss > 0.0)) throw ConfigError("penalty_loss must be positive when set");
    if (workers < 0) throw ConfigError("workers must be >= 0");
    if (objectives != std::vector<std::string>{"test_loss", "block_count"})
      throw ConfigError("objectives must be [test_loss, block_count]");
    if (static_cast<int>(seeds.size()) > population_size)
      throw ConfigError("more seeds than population slots");
    std::vector<std::string> seen;
    for (const auto& s : seeds) {
      const auto& known = known_seed_names();
      if (std::find(known.begin(), known.end(), s) == known.end()) throw ConfigError("unknown seed '" + s + "'");
      if (std::find(seen.begin(), seen.end(), s) != seen.end()) throw ConfigError("duplicate seed '" + s + "'");
      seen.push_back(s);
    }
  }
};

// One evaluated individual as logged. test_loss is the objective value, so a
// penalized individual stores the penalty, with raw_loss keeping the finite
// measurement when one exists.
struct ArchiveEntry {
  std::string identifier;
  std::optional<std::string> parent;
  double test_loss = 0.0;
  int block_count = 0;
  std::size_t param_count = 0;
  std::uint64_t structural_hash = 0;
  int generation = 0;
  int trained_epochs = 0;
  bool diverged = false;
  bool cache_hit = false;
  bool compile_failed = false;
  std::optional<double> initial_loss;
  std::optional<double> raw_loss;
  std::optional<MorphismRecord> lineage;

  ObjectiveVector objectives() const {
    return ObjectiveVector({test_loss, static_cast<double>(block_count)});
  }
};

// Append-only log of everything ever evaluated, with a structural-hash index
// used as an evaluation cache for duplicate genotypes.
class Archive {
 public:
  const std::vector<ArchiveEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  const ArchiveEntry* find(const std::string& identifier) const {
    auto it = by_id_.find(identifier);
    return it == by_id_.end() ? nullptr : &entries_[it->second];
  }

  // First entry with this structural hash, if any.
  const ArchiveEntry* find_hash(std::uint64_t hash) const {
    auto it = by_hash_.find(hash);
    return it == by_hash_.end() ? nullptr : &entries_[it->second];
  }

  void add(ArchiveEntry e) {
    std::size_t idx = entries_.size();
    by_id_.emplace(e.identifier, idx);
    by_hash_.emplace(e.structural_hash, idx);  // keeps the first occurrence
    entries_.push_back(std::move(e));
  }

 private:
  std::vector<ArchiveEntry> entries_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::uint64_t, std::size_t> by_hash_;
};

struct Member {
  Architecture arch;
  Individual ind;
  ParamStore params;  // trained weights, the source for offspring inheritance
};

struct FitnessOutcome {
  std::optional<double> raw_loss;    // finite evaluated loss when training succeeded
  std::optional<double> initial_loss;
  int epochs = 0;
  bool diverged = false;
  bool compile_failed = false;
  std::size_t param_count = 0;
  ParamStore params;
};

// Trains and scores one architecture. Deterministic per (rng_seed,
// identifier): initialization, epoch budget and shuffling all derive from
// that pair, so evaluation order and thread count cannot change results.
inline FitnessOutcome evaluate_fitness(const Architecture& arch, const TaskData& task, const SearchConfig& cfg,
                                       const ParamStore* parent_params = nullptr,
                                       std::optional<double> parent_metric = std::nullopt) {
  FitnessOutcome out;
  RandomSource rng = RandomSource(cfg.rng_seed).derive(arch.identifier);

  CellProgram prog;
  try {
    prog = compile(arch, {task.alphabet.width(), cfg.hidden_dim}, cfg.leaky_slope);
  } catch (const Error&) {
    out.compile_failed = true;
    return out;
  }
  out.param_count = param_count(prog);

  TaskModel model;
  model.program = prog;
  model.params = init_params(prog, rng, parent_params);
  ensure_readout(model.params, task.alphabet.width(), cfg.hidden_dim, rng, parent_params);

  try {
    out.initial_loss = evaluate_sequence_mse(model, task.test, task.alphabet);
  } catch (const NonFiniteValue&) {
    out.initial_loss = std::nullopt;
  }

  out.epochs = epoch_budget(parent_metric, out.initial_loss, cfg.budget);

  TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  tc.epochs = out.epochs;
  tc.clip_norm = cfg.clip_norm;
  tc.rng_seed = rng.seed();
  TrainResult tr = train(model.program, model.params, task.train_items, tc);

  out.params = std::move(model.params);
  if (tr.diverged) {
    out.diverged = true;
    return out;
  }
  try {
    TaskModel trained{prog, out.params};
    double loss = evaluate_sequence_mse(trained, task.test, task.alphabet);
    if (!std::isfinite(loss)) throw NonFiniteValue("test loss non-finite");
    out.raw_loss = loss;
  } catch (const NonFiniteValue&) {
    out.diverged = true;
  }
  return out;
}

struct GenerationStats {
  int generation = 0;
  double mean_block_count = 0.0;
  double mean_loss = 0.0;
  std::vector<int> front_sizes;
  double best_loss = 0.0;
  int min_block_count = 0;
};

inline GenerationStats generation_stats(int generation, const std::vector<Member>& population) {
  if (population.empty()) throw EmptyPopulation("stats over an empty population");
  GenerationStats s;
  s.generation = generation;
  s.best_loss = population.front().ind.objectives[0];
  s.min_block_count = static_cast<int>(population.front().arch.size());
  int max_rank = 0;
  for (const auto& m : population) {
    s.mean_block_count += static_cast<double>(m.arch.size());
    s.mean_loss += m.ind.objectives[0];
    s.best_loss = std::min(s.best_loss, m.ind.objectives[0]);
    s.min_block_count = std::min(s.min_block_count, static_cast<int>(m.arch.size()));
    max_rank = std::max(max_rank, m.ind.rank);
  }
  s.mean_block_count /= static_cast<double>(population.size());
  s.mean_loss /= static_cast<double>(population.size());
  s.front_sizes.assign(max_rank, 0);
  for (const auto& m : population) ++s.front_sizes[m.ind.rank - 1];
  return s;
}

struct RunState {
  std::vector<Member> population;
  Archive archive;
  std::vector<GenerationStats> stats;
  double penalty_loss = 0.0;
};

struct RunHooks {
  // Called once per evaluated individual, in deterministic order. wall_ms is
  // diagnostic only and must not leak into reproducible outputs.
  std::function<void(const ArchiveEntry&, const Member&, double wall_ms)> on_evaluated;
  // Called after each generation's stats entry is appended.
  std::function<void(const RunState&, const GenerationStats&)> on_generation;
};

// Seeded encodings first (in the order given), random founders after.
inline std::vector<Architecture> initialize_population(const SearchConfig& cfg, RandomSource& rng,
                                                       IdentifierFactory& ids) {
  cfg.check();
  std::vector<Architecture> pop;
  pop.reserve(cfg.population_size);
  for (const auto& name : cfg.seeds) pop.push_back(encode_seed(name));
  while (static_cast<int>(pop.size()) < cfg.population_size) pop.push_back(random_initial_architecture(rng, ids));
  return pop;
}

namespace detail {

template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
  if (workers == 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) threads.emplace_back(body);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct EvalJob {
  Architecture arch;
  const ParamStore* parent_params = nullptr;
  std::optional<double> parent_metric;
  std::optional<std::string> parent_id;
  std::optional<MorphismRecord> lineage;
};

struct EvalSlot {
  FitnessOutcome outcome;
  std::uint64_t hash = 0;
  bool cache_hit = false;
  double wall_ms = 0.0;
  std::optional<double> cached_loss;  // objective copied from the archived twin
  bool cached_compile_failed = false;
  bool cached_diverged = false;
};

// Evaluates a batch. Duplicate genotypes (against the archive or earlier in
// the batch) skip training and reuse the twin's objective; their parameters
// stay at the inherited initialization. Unique jobs run under parallel_for;
// everything observable is ordered by batch index afterwards.
inline std::vector<EvalSlot> evaluate_batch(const std::vector<EvalJob>& jobs, const TaskData& task,
                                            const SearchConfig& cfg, const Archive& archive) {
  std::vector<EvalSlot> slots(jobs.size());
  std::map<std::uint64_t, std::size_t> first_in_batch;
  std::vector<std::size_t> unique;

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    slots[i].hash = structural_hash(jobs[i].arch);
    const ArchiveEntry* twin = archive.find_hash(slots[i].hash);
    auto batch_it = first_in_batch.find(slots[i].hash);
    if (twin || batch_it != first_in_batch.end()) {
      slots[i].cache_hit = true;
      if (twin) {
        slots[i].cached_loss = twin->raw_loss;
        slots[i].cached_compile_failed = twin->compile_failed;
        slots[i].cached_diverged = twin->diverged;
      }
      // batch twins are resolved after evaluation below
    } else {
      first_in_batch.emplace(slots[i].hash, i);
      unique.push_back(i);
    }
  }

  parallel_for(unique.size(), cfg.workers, [&](std::size_t k) {
    std::size_t i = unique[k];
    auto t0 = std::chrono::steady_clock::now();
    slots[i].outcome =
        evaluate_fitness(jobs[i].arch, task, cfg, jobs[i].parent_params, jobs[i].parent_metric);
    slots[i].wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  });

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!slots[i].cache_hit) continue;
    auto src_it = first_in_batch.find(slots[i].hash);
    if (!slots[i].cached_loss && src_it != first_in_batch.end()) {
      const EvalSlot& src = slots[src_it->second];
      slots[i].cached_compile_failed = src.outcome.compile_failed;
      slots[i].cached_diverged = src.outcome.diverged;
      if (src.outcome.raw_loss) slots[i].cached_loss = *src.outcome.raw_loss;
    }
    // Cached members still need parameters for later inheritance: compile and
    // inherit without training. Structure is identical to the twin's, so this
    // cannot fail unless the twin also failed to compile.
    if (!slots[i].cached_compile_failed) {
      RandomSource rng = RandomSource(cfg.rng_seed).derive(jobs[i].arch.identifier);
      try {
        CellProgram prog = compile(jobs[i].arch, {task.alphabet.width(), cfg.hidden_dim}, cfg.leaky_slope);
        slots[i].outcome.param_count = param_count(prog);
        slots[i].outcome.params = init_params(prog, rng, jobs[i].parent_params);
        ensure_readout(slots[i].outcome.params, task.alphabet.width(), cfg.hidden_dim, rng, jobs[i].parent_params);
      } catch (const Error&) {
        slots[i].cached_compile_failed = true;
      }
    }
    slots[i].outcome.compile_failed = slots[i].cached_compile_failed;
    slots[i].outcome.diverged = slots[i].cached_diverged;
    slots[i].outcome.raw_loss = slots[i].cached_loss;
    slots[i].outcome.epochs = 0;
  }
  return slots;
}

}  // namespace detail

// NSGA-II generational loop. The archive records every evaluation; the
// returned population is the final survivor set with ranks and crowding
// assigned. generations == 0 returns the evaluated, sorted initial
// population.
inline RunState run_search(const SearchConfig& cfg, const TaskData& task, const RunHooks& hooks = {}) {
  cfg.check();
  if (task.train.empty() || task.test.empty()) throw ConfigError("task data must have train and test samples");

  RunState st;
  IdentifierFactory ids;
  RandomSource evo = RandomSource(cfg.rng_seed).derive("evolution");

  auto sort_members = [](std::vector<Member>& members) {
    std::vector<Individual> inds;
    inds.reserve(members.size());
    for (auto& m : members) inds.push_back(m.ind);
    sort_population(inds);
    for (std::size_t i = 0; i < members.size(); ++i) members[i].ind = inds[i];
  };

  auto ingest = [&](const std::vector<detail::EvalJob>& jobs, std::vector<detail::EvalSlot>& slots,
                    int generation) {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const auto& job = jobs[i];
      auto& slot = slots[i];
      double loss = slot.outcome.raw_loss ? *slot.outcome.raw_loss : st.penalty_loss;

      ArchiveEntry e;
      e.identifier = job.arch.identifier;
      e.parent = job.parent_id;
      e.test_loss = loss;
      e.block_count = static_cast<int>(job.arch.size());
      e.param_count = slot.outcome.param_count;
      e.structural_hash = slot.hash;
      e.generation = generation;
      e.trained_epochs = slot.outcome.epochs;
      e.diverged = slot.outcome.diverged;
      e.cache_hit = slot.cache_hit;
      e.compile_failed = slot.outcome.compile_failed;
      e.initial_loss = slot.outcome.initial_loss;
      e.raw_loss = slot.outcome.raw_loss;
      e.lineage = job.lineage;

      Member m;
      m.arch = job.arch;
      m.ind.identifier = e.identifier;
      m.ind.objectives = e.objectives();
      m.ind.parent = job.parent_id;
      m.params = std::move(slot.outcome.params);

      st.archive.add(e);
      if (hooks.on_evaluated) hooks.on_evaluated(st.archive.entries().back(), m, slot.wall_ms);
      st.population.push_back(std::move(m));
    }
  };

  // Generation 0: seeds plus random founders, no parents.
  std::vector<detail::EvalJob> jobs;
  for (auto& arch : initialize_population(cfg, evo, ids)) {
    detail::EvalJob j;
    j.arch = std::move(arch);
    jobs.push_back(std::move(j));
  }
  auto slots = detail::evaluate_batch(jobs, task, cfg, st.archive);

  if (cfg.penalty_loss) {
    st.penalty_loss = *cfg.penalty_loss;
  } else {
    double worst = 0.0;
    for (const auto& s : slots)
      if (s.outcome.raw_loss) worst = std::max(worst, *s.outcome.raw_loss);
    st.penalty_loss = worst > 0.0 ? 10.0 * worst : 1e3;
    st.penalty_loss = std::max(st.penalty_loss, 1.0);
  }

  ingest(jobs, slots, 0);
  sort_members(st.population);
  st.stats.push_back(generation_stats(0, st.population));
  if (hooks.on_generation) hooks.on_generation(st, st.stats.back());

  for (int gen = 1; gen <= cfg.generations; ++gen) {
    // Parent pool: the best max_parents under the crowded comparator, then
    // binary tournaments pick one pool member per offspring slot.
    std::vector<Individual> pool_inds;
    for (const auto& m : st.population) pool_inds.push_back(m.ind);
    pool_inds = max_parents_cap(pool_inds, static_cast<std::size_t>(cfg.max_parents));

    std::size_t winner_count =
        std::min<std::size_t>(pool_inds.size(), static_cast<std::size_t>(cfg.offspring_per_generation));
    std::vector<std::size_t> winners = tournament_selection(pool_inds, winner_count, evo);

    std::map<std::string, std::size_t> member_of;
    for (std::size_t i = 0; i < st.population.size(); ++i) member_of[st.population[i].ind.identifier] = i;

    std::vector<detail::EvalJob> ojobs;
    for (int j = 0; j < cfg.offspring_per_generation; ++j) {
      const Individual& pick = pool_inds[winners[j % winners.size()]];
      const Member& parent = st.population[member_of.at(pick.identifier)];
      auto [child, record] = generate_offspring(parent.arch, cfg.max_transforms, evo, ids);
      detail::EvalJob job;
      job.arch = std::move(child);
      job.parent_params = &parent.params;
      job.parent_metric = parent.ind.objectives[0];
      job.parent_id = parent.ind.identifier;
      job.lineage = std::move(record);
      ojobs.push_back(std::move(job));
    }

    auto oslots = detail::evaluate_batch(ojobs, task, cfg, st.archive);
    ingest(ojobs, oslots, gen);  // appends offspring to st.population

    std::vector<Individual> combined;
    for (const auto& m : st.population) combined.push_back(m.ind);
    std::vector<Individual> survivors =
        survivor_selection(std::move(combined), static_cast<std::size_t>(cfg.population_size));

    std::map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < st.population.size(); ++i) index_of[st.population[i].ind.identifier] = i;
    std::vector<Member> next;
    next.reserve(survivors.size());
    for (const auto& ind : survivors) {
      Member& src = st.population[index_of.at(ind.identifier)];
      Member m;
      m.arch = std::move(src.arch);
      m.params = std::move(src.params);
      m.ind = ind;
      next.push_back(std::move(m));
    }
    st.population = std::move(next);

    st.stats.push_back(generation_stats(gen, st.population));
    if (hooks.on_generation) hooks.on_generation(st, st.stats.back());
  }
  return st;
}

// Members of the first front, deduplicated by identifier, in crowded order.
inline std::vector<const Member*> pareto_front(const std::vector<Member>& population) {
  std::vector<const Member*> front;
  for (const auto& m : population)
    if (m.ind.rank == 1) front.push_back(&m);
  std::sort(front.begin(), front.end(),
            [](const Member* a, const Member* b) { return crowded_before(a->ind, b->ind); });
  return front;
}

}  // namespace evocell
