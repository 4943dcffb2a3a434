#include "smore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace smore {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const auto& e : entries)
    os << e.name << ": max_rel_err=" << e.max_rel_err << " (analytic=" << e.analytic_at_worst
       << ", numeric=" << e.numeric_at_worst << ")\n";
  os << "overall max_rel_err=" << max_rel_err << "\n";
  return os.str();
}

GradCheckReport grad_check(ParamStore& store, const std::function<double()>& loss_fn,
                           double h) {
  GradCheckReport report;
  for (auto& pp : store.all()) {
    Parameter& p = *pp;
    GradCheckReport::Entry entry;
    entry.name = p.name;
    for (std::size_t i = 0; i < p.storage(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double f1 = loss_fn();
      p.value[i] = saved - h;
      const double f2 = loss_fn();
      p.value[i] = saved;
      const double numeric = (f1 - f2) / (2.0 * h);
      const double analytic = p.grad[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.analytic_at_worst = analytic;
        entry.numeric_at_worst = numeric;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace smore
