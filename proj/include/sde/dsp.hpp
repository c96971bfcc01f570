// sde/dsp.hpp

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

#ifndef SDE_DSP_HPP_
#define SDE_DSP_HPP_

#include "sde/core.hpp"

namespace sde {

inline Index NextPow2(Index n) {
  Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Full linear convolution (length a + b - 1) through a zero-padded FFT.
Eigen::VectorXd FftConvolve(const Eigen::Ref<const Eigen::VectorXd>& a,
                            const Eigen::Ref<const Eigen::VectorXd>& b);

}  // namespace sde

#endif  // SDE_DSP_HPP_
