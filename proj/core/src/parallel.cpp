#include "dgrlab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace dgrlab {

namespace {

std::size_t read_env_budget() {
  const char* raw = std::getenv("DGRLAB_THREADS");
  if (raw == nullptr) return 1;
  try {
    const long value = std::stol(raw);
    return value > 0 ? static_cast<std::size_t>(value) : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

std::atomic<std::size_t>& budget() {
  static std::atomic<std::size_t> value{read_env_budget()};
  return value;
}

}  // namespace

std::size_t thread_budget() { return budget().load(std::memory_order_relaxed); }

void set_thread_budget(std::size_t threads) { budget().store(std::max<std::size_t>(threads, 1)); }

void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body,
                  std::size_t min_work_per_index) {
  if (end <= begin) return;
  const std::size_t count = end - begin;
  std::size_t workers = std::min(thread_budget(), count);
  // Not worth a thread for tiny loops.
  if (count * min_work_per_index < 1u << 15) workers = 1;
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = begin + w * chunk;
    const std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
}

}  // namespace dgrlab
