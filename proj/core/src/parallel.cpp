#include "wrnlab/parallel.hpp"

#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace wrnlab {

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  const std::size_t chunks = std::min<std::size_t>(count, workers < 1 ? 1 : static_cast<std::size_t>(workers));
  if (chunks == 1) {
    fn(0, count);
    return;
  }
  std::vector<std::thread> threads;
  std::exception_ptr error;
  std::mutex mu;
  const std::size_t per = count / chunks, extra = count % chunks;
  std::size_t begin = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t end = begin + per + (c < extra ? 1 : 0);
    threads.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    });
    begin = end;
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

}  // namespace wrnlab
