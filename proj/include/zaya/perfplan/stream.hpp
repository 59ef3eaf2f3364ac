/*
 * Copyright 2026 The Zaya Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// STREAM-style host memory bandwidth probe (copy, scale, add, triad).
// Bytes are counted the usual way: 2N elements moved for copy/scale, 3N for
// add/triad, per pass. Write-allocate traffic is not counted.

#include <algorithm>
#include <barrier>
#include <chrono>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "zaya/numcore/matrix.hpp"

namespace zaya::perf {

enum class StreamKernel { copy, scale, add, triad };

inline const char* to_string(StreamKernel k) {
  switch (k) {
    case StreamKernel::copy: return "copy";
    case StreamKernel::scale: return "scale";
    case StreamKernel::add: return "add";
    case StreamKernel::triad: return "triad";
  }
  return "?";
}

inline StreamKernel parse_stream_kernel(const std::string& s) {
  for (auto k : {StreamKernel::copy, StreamKernel::scale, StreamKernel::add, StreamKernel::triad})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown kernel '" + s + "' (expected copy, scale, add or triad)");
}

inline std::size_t stream_arrays_touched(StreamKernel k) {
  return k == StreamKernel::copy || k == StreamKernel::scale ? 2 : 3;
}

struct StreamResult {
  StreamKernel kernel = StreamKernel::copy;
  std::size_t elements = 0;
  std::size_t elem_bytes = sizeof(double);
  std::size_t bytes_moved = 0;  // per pass
  double best_seconds = 0;
  double gbps = 0;
  bool verified = false;
};

struct StreamOptions {
  std::vector<std::size_t> buffer_bytes{std::size_t(64) << 20};  // per array
  std::vector<StreamKernel> kernels{StreamKernel::copy, StreamKernel::scale, StreamKernel::add, StreamKernel::triad};
  int repeats = 5;
  int threads = 1;
};

namespace detail {

inline void stream_pass(StreamKernel k, double* a, double* b, double* c, double q, std::size_t lo, std::size_t hi) {
  switch (k) {
    case StreamKernel::copy:
      for (std::size_t i = lo; i < hi; ++i) c[i] = a[i];
      break;
    case StreamKernel::scale:
      for (std::size_t i = lo; i < hi; ++i) b[i] = q * c[i];
      break;
    case StreamKernel::add:
      for (std::size_t i = lo; i < hi; ++i) c[i] = a[i] + b[i];
      break;
    case StreamKernel::triad:
      for (std::size_t i = lo; i < hi; ++i) a[i] = b[i] + q * c[i];
      break;
  }
}

}  // namespace detail

inline StreamResult run_stream_kernel(StreamKernel k, std::size_t n, int repeats, int threads) {
  if (n == 0) throw ConfigError("bench_memory: buffer must hold at least one element");
  if (repeats < 3) throw ConfigError("bench_memory: repeats must be >= 3");
  if (threads < 1) throw ConfigError("bench_memory: threads must be >= 1");
  constexpr double q = 3.0;
  std::vector<double> a(n), b(n), c(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = 1.0 + double(i % 7);
    b[i] = 2.0 + double(i % 5);
    c[i] = 0.5 * double(i % 3);
  }
  // Inputs of each kernel are never its output, so every pass writes the
  // same values and the result can be checked once at the end.
  const std::vector<double> a0 = a, b0 = b, c0 = c;

  double best = std::numeric_limits<double>::infinity();
  std::chrono::steady_clock::time_point start;
  std::barrier sync(threads);
  auto worker = [&](int tid) {
    const std::size_t lo = n * tid / threads, hi = n * (tid + 1) / threads;
    for (int pass = 0; pass <= repeats; ++pass) {  // pass 0 warms up
      sync.arrive_and_wait();
      if (tid == 0) start = std::chrono::steady_clock::now();
      sync.arrive_and_wait();
      detail::stream_pass(k, a.data(), b.data(), c.data(), q, lo, hi);
      sync.arrive_and_wait();
      if (tid == 0 && pass > 0)
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker, t);
    worker(0);
  }

  bool ok = true;
  for (std::size_t i = 0; i < n && ok; ++i) {
    switch (k) {
      case StreamKernel::copy: ok = c[i] == a0[i]; break;
      case StreamKernel::scale: ok = b[i] == q * c0[i]; break;
      case StreamKernel::add: ok = c[i] == a0[i] + b0[i]; break;
      case StreamKernel::triad: ok = a[i] == b0[i] + q * c0[i]; break;
    }
  }
  StreamResult r;
  r.kernel = k;
  r.elements = n;
  r.bytes_moved = stream_arrays_touched(k) * n * sizeof(double);
  r.best_seconds = best;
  r.gbps = best > 0 ? double(r.bytes_moved) / best / 1e9 : std::numeric_limits<double>::infinity();
  r.verified = ok;
  if (!ok) throw NumericError(std::string("bench_memory: ") + to_string(k) + " produced wrong values");
  return r;
}

inline std::vector<StreamResult> bench_memory(const StreamOptions& opt) {
  std::vector<StreamResult> out;
  for (auto bytes : opt.buffer_bytes) {
    if (bytes < (std::size_t(1) << 20)) throw ConfigError("bench_memory: buffer sizes must be >= 1 MiB");
    for (auto k : opt.kernels) out.push_back(run_stream_kernel(k, bytes / sizeof(double), opt.repeats, opt.threads));
  }
  return out;
}

}  // namespace zaya::perf
