#include "ctrlgen/eval.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ctrlgen {

namespace {
nlohmann::json metric_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}
}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : intervals) {
    rows.push_back({{"interval", m.name},
                    {"n", m.n},
                    {"ppl", metric_or_null(m.ppl)},
                    {"acc", metric_or_null(m.acc)},
                    {"mse", metric_or_null(m.mse)},
                    {"bleu", metric_or_null(m.bleu)}});
  }
  nlohmann::json j{{"intervals", rows}};
  if (!std::isnan(baseline_ppl)) j["baseline_ppl"] = baseline_ppl;
  return j.dump(2);
}

std::string EvalReport::to_text() const {
  std::size_t name_w = 8;
  for (const auto& m : intervals) name_w = std::max(name_w, m.name.size());
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %8s %10s %8s %8s %8s\n", static_cast<int>(name_w), "interval",
                "n", "ppl", "acc", "mse", "bleu");
  out << line;
  for (const auto& m : intervals) {
    if (m.n == 0) {
      std::snprintf(line, sizeof line, "%-*s %8ld %10s %8s %8s %8s\n", static_cast<int>(name_w),
                    m.name.c_str(), m.n, "-", "-", "-", "-");
    } else {
      std::snprintf(line, sizeof line, "%-*s %8ld %10.2f %8.1f %8.2f %8.3f\n", static_cast<int>(name_w),
                    m.name.c_str(), m.n, m.ppl, m.acc, m.mse, m.bleu);
    }
    out << line;
  }
  if (!std::isnan(baseline_ppl)) {
    std::snprintf(line, sizeof line, "baseline ppl (uncontrolled): %.2f\n", baseline_ppl);
    out << line;
  }
  return out.str();
}

std::string CurveResult::to_csv() const {
  std::ostringstream out;
  out << "desired,mean_realized,stddev,n\n";
  for (const auto& p : points) out << p.desired << ',' << p.mean << ',' << p.stddev << ',' << p.n << '\n';
  return out.str();
}

}  // namespace ctrlgen
