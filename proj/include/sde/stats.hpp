// sde/stats.hpp

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

// Distance bins and the small statistics helpers shared by the dataset
// summaries and the evaluation reports.

#ifndef SDE_STATS_HPP_
#define SDE_STATS_HPP_

#include <string>
#include <utility>
#include <vector>

#include "sde/core.hpp"

namespace sde {

// Ordered, non-overlapping half-open intervals [lo, hi) in meters.
struct BinSpec {
  std::vector<std::pair<double, double>> edges;

  // Throws InvalidInput unless every bin is non-empty and bins ascend
  // without overlap.
  void Validate() const;
  // Bin holding `x`, or -1.
  int Find(double x) const;
  int size() const { return static_cast<int>(edges.size()); }
  std::string Label(int bin) const;  // "[1,2)"

  // {[1,2), [2,4), [4,8), [8,14)}
  static BinSpec Synthetic();
  // Half-open bins between consecutive values of `cuts`.
  static BinSpec FromCuts(const std::vector<double>& cuts);
  static BinSpec Parse(const std::string& text);  // "[1,2),[2,4)"
};

// Linear-interpolation percentile (q in [0, 100]) of unsorted values.
double Percentile(std::vector<double> values, double q);

double Mean(const std::vector<double>& v);
// Sample standard deviation (n - 1); 0 for fewer than two values.
double StdDev(const std::vector<double>& v);

// Quantile of Student's t with `df` degrees of freedom: the t with
// P(T <= t) = prob.
double StudentTQuantile(double prob, int df);
// Standard normal quantile.
double NormalQuantile(double prob);

}  // namespace sde

#endif  // SDE_STATS_HPP_
