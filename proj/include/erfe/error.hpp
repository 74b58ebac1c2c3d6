#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace erfe {

// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class RaggedRow : public Error {
 public:
  using Error::Error;
};

class SingletonSubject : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class WeightDimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NonincreasingTaus : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class BracketFailure : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

// Weighted Gram matrix is not numerically positive definite. `columns` lists
// design columns whose scaled diagonal collapsed (e.g. annihilated by the
// within transform); `iteration` is 0 when raised outside an iterative loop.
class SingularGram : public Error {
 public:
  SingularGram(const std::string& what, std::vector<std::size_t> columns, int iteration = 0)
      : Error(what), columns_(std::move(columns)), iteration_(iteration) {}

  const std::vector<std::size_t>& columns() const noexcept { return columns_; }
  int iteration() const noexcept { return iteration_; }

 private:
  std::vector<std::size_t> columns_;
  int iteration_;
};

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, int iterations) : Error(what), iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

class SingularBread : public Error {
 public:
  using Error::Error;
};

class NotPositiveSemidefinite : public Error {
 public:
  using Error::Error;
};

}  // namespace erfe
