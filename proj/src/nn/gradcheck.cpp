#include "tsr/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace tsr::nn {

std::string GradCheckReport::summary() const {
  std::string out;
  char buf[256];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "  %-48s checked=%-6zu max_rel=%.3e |g|max=%.3e\n", e.name.c_str(), e.checked,
                  e.max_rel_error, e.max_abs_grad);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "max relative error %.3e (tolerance %.1e): %s\n", max_rel_error, tolerance,
                passed ? "PASS" : "FAIL");
  return out + buf;
}

GradCheckReport grad_check(ParamStore<double>& store, const std::function<Var(Graph<double>&)>& loss,
                           const GradCheckOptions& opts) {
  GradBuffer<double> analytic(store);
  {
    Graph<double> g;
    Var l = loss(g);
    g.backward(l);
    g.accumulate_into(analytic);
  }
  auto evaluate = [&] {
    Graph<double> g(false);
    return g.value(loss(g))[0];
  };

  GradCheckReport report;
  report.tolerance = opts.tolerance;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t pi = 0; pi < store.size(); ++pi) {
    Parameter<double>& p = store[pi];
    if (!p.trainable) continue;
    GradCheckEntry entry;
    entry.name = p.name;
    std::vector<std::size_t> idx(p.value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opts.max_entries != 0 && idx.size() > opts.max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_entries);
    }
    for (std::size_t i : idx) {
      const double saved = p.value[i];
      p.value[i] = saved + opts.step;
      const double up = evaluate();
      p.value[i] = saved - opts.step;
      const double down = evaluate();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - numeric) / denom);
      entry.max_abs_grad = std::max(entry.max_abs_grad, std::abs(a));
      ++entry.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error < opts.tolerance;
  return report;
}

}  // namespace tsr::nn
