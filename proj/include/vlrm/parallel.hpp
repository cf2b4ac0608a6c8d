#pragma once

// Ordered parallel map for per-record pipeline work. Items are independent;
// results come back indexed by input position so output order never depends
// on scheduling. Exceptions are captured per item, not propagated.

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace vlrm {

template <typename Result>
struct ItemOutcome {
  std::optional<Result> result;
  std::string error;  // empty on success

  bool ok() const { return result.has_value(); }
};

template <typename Item, typename Fn>
auto parallel_map_ordered(const std::vector<Item>& items, int workers, Fn&& fn)
    -> std::vector<ItemOutcome<std::decay_t<decltype(fn(std::size_t{0}, items[0]))>>> {
  using Result = std::decay_t<decltype(fn(std::size_t{0}, items[0]))>;
  std::vector<ItemOutcome<Result>> outcomes(items.size());
  if (items.empty()) return outcomes;
  if (workers < 1) workers = 1;
  if (static_cast<std::size_t>(workers) > items.size()) workers = static_cast<int>(items.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      std::size_t index = next.fetch_add(1);
      if (index >= items.size()) return;
      try {
        outcomes[index].result = fn(index, items[index]);
      } catch (const std::exception& err) {
        outcomes[index].error = err.what();
      } catch (...) {
        outcomes[index].error = "unknown error";
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return outcomes;
}

}  // namespace vlrm
