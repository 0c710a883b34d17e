#pragma once

#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "invshape/core/node.hpp"
#include "invshape/core/params.hpp"

namespace invshape {

/// Worker cap: INVSHAPE_THREADS if set, else the number of logical processors.
inline std::size_t default_thread_count() {
  if (const char* env = std::getenv("INVSHAPE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
    fail<ConfigError>("INVSHAPE_THREADS must be a positive integer, got '", env, "'");
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

inline std::size_t resolve_threads(std::size_t requested) {
  return requested == 0 ? default_thread_count() : requested;
}

/// Evaluates `loss_fn(model, item)` for every item, backpropagates each
/// scalar loss and accumulates parameter gradients into `model`. With more
/// than one thread, contiguous blocks of items run on private parameter
/// copies whose gradients are summed back in block order, so the result is
/// deterministic for a given thread count. Returns per-item loss values.
template <typename Model, typename LossFn>
std::vector<double> batch_gradients(Model& model, const std::vector<std::size_t>& items,
                                    std::size_t threads, LossFn&& loss_fn) {
  std::vector<double> losses(items.size());
  const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(threads, 1), items.size());
  if (workers <= 1) {
    for (std::size_t k = 0; k < items.size(); ++k) {
      Node loss = loss_fn(static_cast<const Model&>(model), items[k]);
      losses[k] = loss.value()[0];
      backward(loss);
    }
    return losses;
  }
  std::vector<Model> copies;
  copies.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) copies.push_back(model.deep_copy());
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  const std::size_t chunk = (items.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        const std::size_t lo = w * chunk, hi = std::min(items.size(), lo + chunk);
        for (std::size_t k = lo; k < hi; ++k) {
          Node loss = loss_fn(static_cast<const Model&>(copies[w]), items[k]);
          losses[k] = loss.value()[0];
          backward(loss);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (const Model& c : copies) model.params().accumulate_grads_from(c.params());
  return losses;
}

}  // namespace invshape
