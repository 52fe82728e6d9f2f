#pragma once

#include <stdexcept>
#include <string>

namespace salsa {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid user-supplied configuration or arguments.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Scoring a candidate that is already in the ledger (or repeated in a batch).
class DuplicateCandidateError : public Error {
 public:
  explicit DuplicateCandidateError(const std::string& what) : Error(what) {}
};

// A batch would push the objective call count past the run budget.
class BudgetExhaustedError : public Error {
 public:
  explicit BudgetExhaustedError(const std::string& what) : Error(what) {}
};

// External scorer subprocess failures.
class ScorerError : public Error {
 public:
  explicit ScorerError(const std::string& what) : Error(what) {}
};

class ScorerTimeoutError : public ScorerError {
 public:
  explicit ScorerTimeoutError(const std::string& what) : ScorerError(what) {}
};

class ScorerProtocolError : public ScorerError {
 public:
  explicit ScorerProtocolError(const std::string& what) : ScorerError(what) {}
};

// File parsing / IO errors.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace salsa
