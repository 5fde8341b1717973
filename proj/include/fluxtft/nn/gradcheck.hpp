#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fluxtft/core/text.hpp"
#include "fluxtft/nn/params.hpp"

namespace fluxtft::nn {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error < tolerance; }

  std::string summary() const {
    std::ostringstream os;
    for (const auto& e : entries) {
      os << e.name << " max_rel=" << text::format_double(e.max_rel_error) << " max_abs=" << text::format_double(e.max_abs_error)
         << " at " << e.worst_index << "\n";
    }
    os << "overall max_rel=" << text::format_double(max_rel_error) << (passed() ? " PASS" : " FAIL") << "\n";
    return os.str();
  }
};

struct GradCheckOptions {
  double eps = 1e-6;
  double tolerance = 1e-5;
  double floor = 1e-4;  // denominator floor in the relative error
};

/// Compares analytic gradients against central differences.
/// `loss` evaluates the scalar objective at the current parameter values;
/// `loss_and_grad` evaluates it and accumulates gradients into a zeroed store.
inline GradCheckReport gradient_check(ParamStore& store, const std::function<double()>& loss,
                                      const std::function<double()>& loss_and_grad, const GradCheckOptions& opt = {}) {
  store.zero_grad();
  loss_and_grad();
  GradCheckReport report;
  report.tolerance = opt.tolerance;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Param& p = store[i];
    const std::vector<double> analytic(p.grad.values().begin(), p.grad.values().end());
    GradCheckEntry e{p.name};
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double orig = p.value[k];
      p.value[k] = orig + opt.eps;
      const double lp = loss();
      p.value[k] = orig - opt.eps;
      const double lm = loss();
      p.value[k] = orig;
      const double numeric = (lp - lm) / (2.0 * opt.eps);
      const double abs_err = std::abs(analytic[k] - numeric);
      const double rel = abs_err / std::max({std::abs(analytic[k]), std::abs(numeric), opt.floor});
      e.max_abs_error = std::max(e.max_abs_error, abs_err);
      if (rel > e.max_rel_error) {
        e.max_rel_error = rel;
        e.worst_index = k;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace fluxtft::nn
