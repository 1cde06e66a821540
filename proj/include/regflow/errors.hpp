#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace regflow {

// Signals numerical blow-up (non-finite state) in an integrator or loss.
// Callers react explicitly (reduce step size / learning rate, abort run);
// values are never silently clamped.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite training loss, carrying the index of the offending batch pair.
class NonFiniteLossError : public NumericalError {
 public:
  NonFiniteLossError(const std::string& what, std::size_t pair_index)
      : NumericalError(what), pair_index_(pair_index) {}
  std::size_t pair_index() const { return pair_index_; }

 private:
  std::size_t pair_index_;
};

}  // namespace regflow
