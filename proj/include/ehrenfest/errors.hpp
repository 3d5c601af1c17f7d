#pragma once

#include <stdexcept>
#include <string>

namespace ehrenfest {

// Operand shapes disagree (vector lengths, grids, kernel size).
class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical routine could not deliver its contract: overflow caps,
// truncation too coarse, singular Gram matrices, solver disagreement.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": size " + std::to_string(a) +
                            " does not match " + std::to_string(b));
  }
}

}  // namespace ehrenfest
