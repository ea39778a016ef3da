// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#include "glr/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace glr {
namespace {

std::atomic<int> g_deterministic{-1};
std::atomic<int> g_threads{0};

bool env_deterministic() {
  const char* v = std::getenv("GLR_DETERMINISTIC");
  return v != nullptr && std::strcmp(v, "1") == 0;
}

}  // namespace

bool deterministic_mode() {
  int v = g_deterministic.load();
  if (v < 0) {
    v = env_deterministic() ? 1 : 0;
    g_deterministic.store(v);
  }
  return v == 1;
}

void set_deterministic(bool on) { g_deterministic.store(on ? 1 : 0); }

int thread_count() {
  if (deterministic_mode()) return 1;
  int n = g_threads.load();
  if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return n;
}

void set_thread_count(int n) { g_threads.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        try {
          for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(n);
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace glr
