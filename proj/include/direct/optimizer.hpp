#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "direct/autograd.hpp"
#include "direct/common.hpp"

namespace direct {

enum class OptimizerKind : std::uint8_t {
  kLazyAdam,  // only the parameters passed to step() move; others keep their moments
  kAdam,      // every registered parameter advances each step
  kSgd,
};

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "lazy_adam") return OptimizerKind::kLazyAdam;
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw UsageError("unknown optimizer '" + std::string(s) + "'");
}

inline std::string_view optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kLazyAdam: return "lazy_adam";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kSgd: return "sgd";
  }
  return "?";
}

class Optimizer {
 public:
  struct Hyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Optimizer(OptimizerKind kind, std::vector<ag::Parameter*> all) : Optimizer(kind, std::move(all), Hyper()) {}

  Optimizer(OptimizerKind kind, std::vector<ag::Parameter*> all, Hyper hyper)
      : kind_(kind), all_(std::move(all)), hyper_(hyper) {
    for (auto* p : all_)
      state_.emplace(p, Slot{ag::Matrix::Zero(p->value.rows(), p->value.cols()),
                             ag::Matrix::Zero(p->value.rows(), p->value.cols()), 0});
  }

  OptimizerKind kind() const { return kind_; }

  /// Applies one update. `active` are the parameters of the current step
  /// (shared encoder plus the current task's head). The plain Adam variant
  /// advances every registered parameter regardless.
  void step(std::span<ag::Parameter* const> active, double lr) {
    if (kind_ == OptimizerKind::kAdam) {
      for (auto* p : all_) adam(*p, lr);
      return;
    }
    for (auto* p : active) {
      if (kind_ == OptimizerKind::kSgd) p->value -= lr * p->grad;
      else adam(*p, lr);
    }
  }

  std::int64_t steps_taken(const ag::Parameter* p) const { return state_.at(p).t; }
  const ag::Matrix& first_moment(const ag::Parameter* p) const { return state_.at(p).m; }

 private:
  struct Slot {
    ag::Matrix m;
    ag::Matrix v;
    std::int64_t t = 0;
  };

  void adam(ag::Parameter& p, double lr) {
    auto it = state_.find(&p);
    if (it == state_.end()) throw Error("optimizer: unregistered parameter " + p.name);
    Slot& s = it->second;
    ++s.t;
    s.m = hyper_.beta1 * s.m + (1.0 - hyper_.beta1) * p.grad;
    s.v = hyper_.beta2 * s.v + (1.0 - hyper_.beta2) * p.grad.cwiseProduct(p.grad);
    const double c1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(s.t));
    p.value.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + hyper_.eps);
  }

  OptimizerKind kind_;
  std::vector<ag::Parameter*> all_;
  Hyper hyper_;
  std::unordered_map<const ag::Parameter*, Slot> state_;
};

}  // namespace direct
