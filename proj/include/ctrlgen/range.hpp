#pragma once

#include <string>

#include "ctrlgen/util.hpp"

namespace ctrlgen {

// Inclusive integer interval, written "lo..hi" in configs and reports.
struct IntRange {
  int lo = 0;
  int hi = 0;

  bool contains(int c) const { return c >= lo && c <= hi; }
  int width() const { return hi - lo + 1; }

  std::string str() const { return cat(lo, "..", hi); }

  // Accepts "lo..hi" or a bare integer, which stands for the one-value range.
  static IntRange parse(const std::string& text) {
    const auto whole = [&](const std::string& part) {
      try {
        std::size_t used = 0;
        const int v = std::stoi(part, &used);
        if (used != part.size()) throw std::invalid_argument(part);
        return v;
      } catch (const std::exception&) {
        throw ConfigError(cat("range: expected \"lo..hi\", got \"", text, "\""));
      }
    };
    IntRange r;
    const auto pos = text.find("..");
    if (pos == std::string::npos) {
      r.lo = r.hi = whole(text);
      return r;
    }
    r.lo = whole(text.substr(0, pos));
    r.hi = whole(text.substr(pos + 2));
    if (r.lo > r.hi) throw ConfigError(cat("range: lo > hi in \"", text, "\""));
    return r;
  }

  bool operator==(const IntRange&) const = default;
};

}  // namespace ctrlgen
