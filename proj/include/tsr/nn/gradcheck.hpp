#pragma once

// Finite-difference verification of reverse-mode gradients (64-bit only).

#include <functional>
#include <string>
#include <vector>

#include "tsr/nn/graph.hpp"

namespace tsr::nn {

struct GradCheckOptions {
  double step = 1e-5;       // central-difference h
  double tolerance = 1e-4;  // max relative error
  // |a - n| / max(|a|, |n|, floor): entries whose gradients are both below
  // the floor are compared in absolute terms against it.
  double floor = 1e-5;
  // Entries checked per parameter; 0 checks every entry.
  std::size_t max_entries = 0;
  std::uint64_t seed = 7;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;

  std::string summary() const;
};

/// `loss` builds a fresh graph over `store` and returns a scalar Var. It must
/// be deterministic (dropout off).
GradCheckReport grad_check(ParamStore<double>& store, const std::function<Var(Graph<double>&)>& loss,
                           const GradCheckOptions& opts = {});

}  // namespace tsr::nn
