#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace seqstage {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A replication sampled past its observation cap without crossing.
class BudgetExceeded : public std::runtime_error {
 public:
  BudgetExceeded(const std::string& what, std::int64_t cap)
      : std::runtime_error(what), cap_(cap) {}
  std::int64_t cap() const noexcept { return cap_; }

 private:
  std::int64_t cap_;
};

/// The stage-budget search ran off its upper limit.
class CapReached : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The exact oracle left more unabsorbed mass than allowed.
class TruncationExcessive : public std::runtime_error {
 public:
  TruncationExcessive(const std::string& what, double mass)
      : std::runtime_error(what), mass_(mass) {}
  double mass() const noexcept { return mass_; }

 private:
  double mass_;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace seqstage
