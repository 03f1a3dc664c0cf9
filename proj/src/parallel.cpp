#include "tcqa/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace tcqa {

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("TCQA_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void parallel_jobs(std::size_t job_count, unsigned threads,
                   const std::function<void(std::size_t)>& job) {
  threads = resolve_threads(threads);
  if (threads <= 1 || job_count <= 1) {
    for (std::size_t i = 0; i < job_count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= job_count || failed.load()) return;
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  unsigned n = threads < job_count ? threads : static_cast<unsigned>(job_count);
  pool.reserve(n);
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(std::size_t n,
                                                              std::size_t chunk_count) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (n == 0) return out;
  if (chunk_count == 0) chunk_count = 1;
  if (chunk_count > n) chunk_count = n;
  std::size_t base = n / chunk_count;
  std::size_t rem = n % chunk_count;
  std::size_t begin = 0;
  for (std::size_t c = 0; c < chunk_count; ++c) {
    std::size_t len = base + (c < rem ? 1 : 0);
    out.emplace_back(begin, begin + len);
    begin += len;
  }
  return out;
}

}  // namespace tcqa
