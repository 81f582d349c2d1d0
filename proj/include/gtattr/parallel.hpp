#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace gtattr::detail {

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Splits [0, count) into at most `workers` contiguous ranges in ascending order.
inline std::vector<IndexRange> split_range(std::size_t count, std::size_t workers) {
  workers = std::max<std::size_t>(1, std::min(workers, count == 0 ? 1 : count));
  std::vector<IndexRange> ranges;
  ranges.reserve(workers);
  const std::size_t base = count / workers;
  const std::size_t extra = count % workers;
  std::size_t at = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t len = base + (w < extra ? 1 : 0);
    ranges.push_back({at, at + len});
    at += len;
  }
  return ranges;
}

// Runs fn(worker_index, range) for every range. With one range the call is
// made on the calling thread. The first exception (in range order) is rethrown.
template <typename Fn>
void for_each_range(const std::vector<IndexRange>& ranges, Fn&& fn) {
  if (ranges.size() == 1) {
    fn(std::size_t{0}, ranges[0]);
    return;
  }
  std::vector<std::exception_ptr> errors(ranges.size());
  std::vector<std::thread> threads;
  threads.reserve(ranges.size());
  for (std::size_t w = 0; w < ranges.size(); ++w) {
    threads.emplace_back([&, w] {
      try {
        fn(w, ranges[w]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace gtattr::detail
