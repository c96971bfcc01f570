// sde/parallel.hpp

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

// Worker-count policy and a minimal parallel-for over independent items.

#ifndef SDE_PARALLEL_HPP_
#define SDE_PARALLEL_HPP_

#include <functional>

#include "sde/core.hpp"

namespace sde {

// Name of the environment variable that sets the worker count.
inline constexpr const char* kWorkersEnv = "SDE_WORKERS";

// SDE_WORKERS if set to a positive integer, else hardware concurrency.
int WorkerCount();

// Calls fn(i) for i in [0, n) on up to `workers` threads. Items must not
// share mutable state. The first exception thrown by any item is rethrown
// after all threads have joined.
void ParallelFor(Index n, const std::function<void(Index)>& fn, int workers = 0);

}  // namespace sde

#endif  // SDE_PARALLEL_HPP_
