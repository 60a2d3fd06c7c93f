#pragma once

#include <stdexcept>
#include <string>

namespace repgn {

/// Malformed or out-of-contract input (bad box, size mismatch, parse failure).
class InvalidInput : public std::invalid_argument {
public:
  explicit InvalidInput(const std::string &what) : std::invalid_argument(what) {}
};

/// A partition containing a set whose total connection (assoc) is zero.
class DegeneratePartition : public InvalidInput {
public:
  explicit DegeneratePartition(const std::string &what) : InvalidInput(what) {}
};

/// Exhaustive search requested on a graph that is too large to enumerate.
class SizeLimit : public InvalidInput {
public:
  explicit SizeLimit(const std::string &what) : InvalidInput(what) {}
};

/// Non-convergence or non-finite values inside a numerical kernel.
class NumericalFailure : public std::runtime_error {
public:
  explicit NumericalFailure(const std::string &what) : std::runtime_error(what) {}
};

} // namespace repgn
