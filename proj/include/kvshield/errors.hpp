#pragma once

#include <stdexcept>
#include <string>

namespace kvshield {

// Shape/dimension contract violations (mismatched matmul operands, empty
// softmax input, bad permutation dimension).
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Plain-world data reached a shielded path or vice versa.
class WorldMismatchError : public std::logic_error {
 public:
  explicit WorldMismatchError(const std::string& msg) : std::logic_error(msg) {}
};

// A secure-world operation would exceed the trusted memory budget.
class BudgetError : public std::runtime_error {
 public:
  explicit BudgetError(const std::string& msg) : std::runtime_error(msg) {}
};

// An operation refused to run because its cost guard tripped
// (factorial search above the dimension cap, oversized benchmark inputs).
class RefusalError : public std::invalid_argument {
 public:
  explicit RefusalError(const std::string& msg) : std::invalid_argument(msg) {}
};

}  // namespace kvshield
