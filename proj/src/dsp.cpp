// src/dsp.cpp

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

#include "sde/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

namespace sde {

Eigen::VectorXd FftConvolve(const Eigen::Ref<const Eigen::VectorXd>& a,
                            const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() == 0 || b.size() == 0) return Eigen::VectorXd();
  const Index out_len = a.size() + b.size() - 1;
  const Index n = NextPow2(out_len);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> pa(n, 0.0), pb(n, 0.0);
  for (Index i = 0; i < a.size(); ++i) pa[i] = a[i];
  for (Index i = 0; i < b.size(); ++i) pb[i] = b[i];
  std::vector<std::complex<double>> fa, fb;
  fft.fwd(fa, pa);
  fft.fwd(fb, pb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  std::vector<double> y;
  fft.inv(y, fa, n);

  Eigen::VectorXd out(out_len);
  for (Index i = 0; i < out_len; ++i) out[i] = y[i];
  return out;
}

}  // namespace sde
