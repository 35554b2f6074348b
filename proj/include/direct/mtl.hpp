#pragma once

// Adaptive multi-task balancing. Each task keeps an exponential moving
// average of its per-batch loss sums,
//     v_t <- (1 - eps) * sum(l_t) + eps * v_t,
// and its loss weight is the batch-count-normalised EMA relative to the
// relation task,
//     w_t = (v_t / n_t) / (v_r / n_r).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "direct/common.hpp"

namespace direct {

inline constexpr double kDefaultEmaDecay = 0.99;

struct EmaState {
  std::array<double, 3> v{1.0, 1.0, 1.0};
  double decay = kDefaultEmaDecay;
  std::array<std::size_t, 3> batches{1, 1, 1};  // n_t: batches per epoch

  static EmaState initial(std::array<std::size_t, 3> batch_counts, double decay = kDefaultEmaDecay) {
    if (!(decay >= 0.0 && decay < 1.0)) throw UsageError("EMA decay must lie in [0, 1)");
    for (auto n : batch_counts)
      if (n == 0) throw UsageError("every task needs at least one batch");
    EmaState s;
    s.decay = decay;
    s.batches = batch_counts;
    return s;
  }

  double value(Task t) const { return v[task_index(t)]; }
  std::size_t batch_count(Task t) const { return batches[task_index(t)]; }

  bool operator==(const EmaState&) const = default;
};

inline EmaState update_ema(EmaState state, Task task, double loss_sum) {
  if (!std::isfinite(loss_sum))
    throw NumericError("non-finite loss sum for task " + std::string(task_name(task)));
  if (loss_sum < 0.0) throw NumericError("negative loss sum for task " + std::string(task_name(task)));
  double& v = state.v[task_index(task)];
  v = (1.0 - state.decay) * loss_sum + state.decay * v;
  return state;
}

inline double task_weight(const EmaState& state, Task task, bool equal_weights = false) {
  if (equal_weights) return 1.0;
  const double ref = state.value(Task::kRelation) / static_cast<double>(state.batch_count(Task::kRelation));
  return (state.value(task) / static_cast<double>(state.batch_count(task))) / ref;
}

// ---------------------------------------------------------------------------
// Batch schedule

struct Batch {
  Task task = Task::kSubject;
  std::vector<std::size_t> examples;  // indices into that task's example list

  bool operator==(const Batch&) const = default;
};

struct BatchSchedule {
  std::vector<Batch> batches;
  std::array<std::size_t, 3> per_task{};  // n_t

  std::size_t size() const { return batches.size(); }
};

/// Packs each task's examples into consecutive mini-batches (the last one
/// may be short), merges the three lists and shuffles them with `seed`.
inline BatchSchedule build_schedule(std::array<std::size_t, 3> example_counts, std::size_t batch_size,
                                    std::uint64_t seed) {
  if (batch_size == 0) throw UsageError("batch size must be positive");
  BatchSchedule s;
  for (Task t : kAllTasks) {
    const std::size_t n = example_counts[task_index(t)];
    if (n == 0) throw DataError("task '" + std::string(task_name(t)) + "' has no training examples");
    for (std::size_t b = 0; b < n; b += batch_size) {
      Batch batch{t, {}};
      for (std::size_t i = b; i < std::min(n, b + batch_size); ++i) batch.examples.push_back(i);
      s.batches.push_back(std::move(batch));
      ++s.per_task[task_index(t)];
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(s.batches.begin(), s.batches.end(), rng);
  return s;
}

/// Linear warm-up to `peak` over the first `warmup_fraction` of the steps,
/// then linear decay towards zero.
class TriangularSchedule {
 public:
  TriangularSchedule(double peak, std::size_t total_steps, double warmup_fraction)
      : peak_(peak), total_(std::max<std::size_t>(total_steps, 1)) {
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw UsageError("warmup fraction must lie in [0, 1)");
    warmup_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total_))));
    warmup_ = std::min(warmup_, total_);
  }

  double at(std::size_t step) const {
    if (step < warmup_) return peak_ * static_cast<double>(step + 1) / static_cast<double>(warmup_);
    if (step >= total_) return 0.0;
    return peak_ * static_cast<double>(total_ - step) / static_cast<double>(std::max<std::size_t>(1, total_ - warmup_));
  }

  std::size_t warmup_steps() const { return warmup_; }
  std::size_t total_steps() const { return total_; }

 private:
  double peak_;
  std::size_t total_;
  std::size_t warmup_ = 1;
};

}  // namespace direct
