#pragma once

// Canonical clustering fixtures shared by the metric unit tests and the
// acceptance suite. Expected values come from an independent brute-force
// scorer and are written as exact fractions.

#include <string>
#include <vector>

#include "docie/metrics.hpp"

namespace testing_support {

// Mentions are single letters; letter i is the span (i, i).
inline docie::metrics::Clustering letters(std::initializer_list<std::string> groups) {
  docie::metrics::Clustering out;
  for (const auto& g : groups) {
    std::vector<docie::corpus::Span> c;
    for (char ch : g) {
      const auto i = static_cast<std::size_t>(ch - 'a');
      c.push_back({i, i});
    }
    out.push_back(c);
  }
  return out;
}

struct MetricFixture {
  const char* name;
  docie::metrics::Clustering gold;
  docie::metrics::Clustering pred;
  double expect[9];  // MUC P R F, B3 P R F, CEAF-phi4 P R F
};

inline std::vector<MetricFixture> metric_fixtures() {
  return {
      {"identical", letters({"a", "bc", "def"}), letters({"a", "bc", "def"}),
       {1, 1, 1, 1, 1, 1, 1, 1, 1}},
      {"split", letters({"abc"}), letters({"ab", "c"}),
       {1, 0.5, 2.0 / 3, 1, 5.0 / 9, 5.0 / 7, 0.4, 0.8, 8.0 / 15}},
      {"merge", letters({"ab", "c"}), letters({"abc"}),
       {0.5, 1, 2.0 / 3, 5.0 / 9, 1, 5.0 / 7, 0.8, 0.4, 8.0 / 15}},
      {"all singletons", letters({"abcd"}), letters({"a", "b", "c", "d"}),
       {0, 0, 0, 1, 0.25, 0.4, 0.1, 0.4, 0.16}},
      {"single cluster", letters({"a", "b", "c", "d"}), letters({"abcd"}),
       {0, 0, 0, 0.25, 1, 0.4, 0.4, 0.1, 0.16}},
      {"extra mention", letters({"ab"}), letters({"abx"}),
       {0.5, 1, 2.0 / 3, 4.0 / 9, 1, 8.0 / 13, 0.8, 0.8, 0.8}},
      {"missing mention", letters({"abc"}), letters({"ab"}),
       {1, 0.5, 2.0 / 3, 1, 4.0 / 9, 8.0 / 13, 0.8, 0.8, 0.8}},
      {"crossing", letters({"abc", "defg"}), letters({"ab", "cd", "fghi"}),
       {0.4, 0.4, 0.4, 0.5, 5.0 / 12, 5.0 / 11, 13.0 / 30, 0.65, 0.52}},
      {"disjoint", letters({"ab"}), letters({"xy"}), {0, 0, 0, 0, 0, 0, 0, 0, 0}},
      {"mixed", letters({"ab", "cd", "e"}), letters({"ac", "bde"}),
       {0, 0, 0, 0.4, 0.6, 0.48, 0.5, 1.0 / 3, 0.4}},
      {"empty prediction", letters({"ab", "c"}), docie::metrics::Clustering{},
       {0, 0, 0, 0, 0, 0, 0, 0, 0}},
  };
}

}  // namespace testing_support
