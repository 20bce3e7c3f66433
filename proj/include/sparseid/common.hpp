#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace sparseid {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Violated precondition on dimensions or call order.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed user input (times, step sizes, partitions).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad or inconsistent configuration (weights, criteria, config files).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Query for a key that does not exist, e.g. a non-measurement time.
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Pruning candidate that is a bias or an already removed weight.
class InvalidCandidate : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Solver could not start or diverged.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// CSV ingest failure, carrying the 1-based line number (0 when the file
/// could not be read at all).
class IngestError : public std::runtime_error {
 public:
  IngestError(int line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  [[nodiscard]] int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Resolves a worker count; 0 means all available threads.
int resolve_workers(int requested);

}  // namespace sparseid
