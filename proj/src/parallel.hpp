// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace tcnn::detail {

// Exceptions must not cross an OpenMP region boundary. Each iteration
// records its own failure; the lowest-index one is rethrown afterwards.
class IterationErrors {
 public:
  explicit IterationErrors(std::size_t n) : errors_(n) {}

  template <typename F>
  void run(std::size_t i, F&& body) noexcept {
    try {
      body();
    } catch (...) {
      errors_[i] = std::current_exception();
    }
  }

  void rethrow_first() const {
    for (const auto& e : errors_) {
      if (e) std::rethrow_exception(e);
    }
  }

 private:
  std::vector<std::exception_ptr> errors_;
};

}  // namespace tcnn::detail
