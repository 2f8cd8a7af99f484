#pragma once

#include <stdexcept>
#include <string>

namespace rmis {

/// Base of every error raised by the library.
///
/// Two families exist: domain errors (bad inputs, singular parameters,
/// structurally invalid tables) and numerical errors (blow-up, failed
/// convergence, rank loss). The CLI maps them to exit codes 2 and 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class InvalidTable : public DomainError {
 public:
  using DomainError::DomainError;
};

class InvalidArgument : public DomainError {
 public:
  using DomainError::DomainError;
};

/// A denominator of the two-parameter 4-stage family vanished.
class SingularFamilyPoint : public DomainError {
 public:
  SingularFamilyPoint(std::string denominator, double value)
      : DomainError("singular family point: denominator " + denominator +
                    " = " + std::to_string(value)),
        denominator_(std::move(denominator)) {}

  const std::string& denominator() const noexcept { return denominator_; }

 private:
  std::string denominator_;
};

class InvalidOuter : public DomainError {
 public:
  using DomainError::DomainError;
};

class InnerNotExplicitFirstStage : public DomainError {
 public:
  InnerNotExplicitFirstStage()
      : DomainError("inner table must have an explicit first stage") {}
};

class NotInternallyConsistent : public DomainError {
 public:
  explicit NotInternallyConsistent(double residual)
      : DomainError("tableau violates internal consistency (residual " +
                    std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class NotExplicitlyOrderable : public DomainError {
 public:
  using DomainError::DomainError;
};

class NoAdmissibleSample : public DomainError {
 public:
  NoAdmissibleSample()
      : DomainError("no admissible sample on the family curve") {}
};

class RankDeficient : public NumericalError {
 public:
  RankDeficient(int rank, int conditions, double residual)
      : NumericalError("fast-condition system is inconsistent: rank " +
                       std::to_string(rank) + " of " +
                       std::to_string(conditions) + ", residual " +
                       std::to_string(residual)),
        rank_(rank) {}

  int rank() const noexcept { return rank_; }

 private:
  int rank_;
};

/// A stage or solution vector contained NaN or Inf.
class NonFiniteState : public NumericalError {
 public:
  NonFiniteState(std::string where, int stage, double t)
      : NumericalError("non-finite state in " + where + " (stage " +
                       std::to_string(stage) + ", t = " + std::to_string(t) +
                       ")"),
        stage_(stage),
        t_(t) {}

  int stage() const noexcept { return stage_; }
  double time() const noexcept { return t_; }

 private:
  int stage_;
  double t_;
};

class NoConvergence : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace rmis
