// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace glr {

/// True when GLR_DETERMINISTIC=1 is set or set_deterministic(true) was called.
/// Deterministic mode pins every parallel loop to one thread.
bool deterministic_mode();
void set_deterministic(bool on);

/// Worker count used by parallel_for; 1 in deterministic mode.
int thread_count();
void set_thread_count(int n);

/// Runs fn(i) for i in [0, n). Every index is written by exactly one call, so
/// callers that write disjoint outputs get schedule-independent results.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace glr
