// src/stats.cpp

// Copyright 2026  The sdelab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sde/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sde/csv.hpp"

namespace sde {

void BinSpec::Validate() const {
  if (edges.empty()) throw InvalidInput("bin spec is empty");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& [lo, hi] = edges[i];
    if (!(lo < hi)) throw InvalidInput("bin " + Label(static_cast<int>(i)) + " is empty");
    if (i > 0 && lo < edges[i - 1].second) {
      throw InvalidInput("bins " + Label(static_cast<int>(i - 1)) + " and " +
                         Label(static_cast<int>(i)) + " overlap or are out of order");
    }
  }
}

int BinSpec::Find(double x) const {
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (x >= edges[i].first && x < edges[i].second) return static_cast<int>(i);
  }
  return -1;
}

std::string BinSpec::Label(int bin) const {
  return "[" + FormatDouble(edges[bin].first) + "," + FormatDouble(edges[bin].second) + ")";
}

BinSpec BinSpec::Synthetic() { return FromCuts({1.0, 2.0, 4.0, 8.0, 14.0}); }

BinSpec BinSpec::FromCuts(const std::vector<double>& cuts) {
  BinSpec spec;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) spec.edges.emplace_back(cuts[i], cuts[i + 1]);
  spec.Validate();
  return spec;
}

BinSpec BinSpec::Parse(const std::string& text) {
  BinSpec spec;
  std::size_t pos = 0;
  while ((pos = text.find('[', pos)) != std::string::npos) {
    const std::size_t comma = text.find(',', pos);
    const std::size_t close = text.find(')', pos);
    if (comma == std::string::npos || close == std::string::npos || comma > close) {
      throw InvalidInput("malformed bin list '" + text + "'");
    }
    spec.edges.emplace_back(ParseDouble(text.substr(pos + 1, comma - pos - 1), "bin edge"),
                            ParseDouble(text.substr(comma + 1, close - comma - 1), "bin edge"));
    pos = close + 1;
  }
  spec.Validate();
  return spec;
}

double Percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - lo) * (values[hi] - values[lo]);
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double StdDev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = Mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (v.size() - 1));
}

namespace {

// P(T <= t) for integer degrees of freedom, by the finite trigonometric
// series for P(|T| < t).
double StudentTCdf(double t, int df) {
  const double theta = std::atan(std::abs(t) / std::sqrt(static_cast<double>(df)));
  const double s = std::sin(theta);
  const double c2 = std::cos(theta) * std::cos(theta);
  double a;
  if (df % 2 == 1) {
    double term = 1.0, sum = 0.0;
    if (df > 1) {
      sum = 1.0;
      for (int k = 3; k <= df - 2; k += 2) {
        term *= c2 * (k - 1) / k;
        sum += term;
      }
      sum *= s * std::cos(theta);
    }
    a = 2.0 / kPi * (theta + sum);
  } else {
    double term = 1.0, sum = 1.0;
    for (int k = 2; k <= df - 2; k += 2) {
      term *= c2 * (k - 1) / k;
      sum += term;
    }
    a = s * sum;
  }
  return t >= 0.0 ? 0.5 + 0.5 * a : 0.5 - 0.5 * a;
}

template <typename Cdf>
double InvertCdf(double prob, Cdf cdf) {
  double lo = -1e3, hi = 1e3;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < prob ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double StudentTQuantile(double prob, int df) {
  if (df < 1) throw InvalidInput("Student t needs at least one degree of freedom");
  if (!(prob > 0.0 && prob < 1.0)) throw InvalidInput("quantile probability outside (0, 1)");
  return InvertCdf(prob, [df](double t) { return StudentTCdf(t, df); });
}

double NormalQuantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw InvalidInput("quantile probability outside (0, 1)");
  return InvertCdf(prob, [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); });
}

}  // namespace sde
