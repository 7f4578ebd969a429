#pragma once

#include <stdexcept>
#include <string>

namespace elapsed {

// Failure classes map onto the CLI exit-code contract.
enum class ErrorClass { Config = 2, MathStructure = 3, Numerical = 4 };

class Error : public std::runtime_error {
public:
  Error(ErrorClass cls, const std::string& what)
      : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }
  int exit_code() const noexcept { return static_cast<int>(cls_); }

private:
  ErrorClass cls_;
};

#define ELAPSED_DEFINE_ERROR(Name, Cls)                                        \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string& what)                                     \
        : Error(ErrorClass::Cls, #Name ": " + what) {}                         \
  };

ELAPSED_DEFINE_ERROR(ConfigError, Config)
ELAPSED_DEFINE_ERROR(DomainError, Config)
ELAPSED_DEFINE_ERROR(NonSmoothModel, MathStructure)
ELAPSED_DEFINE_ERROR(DiracNotDensity, MathStructure)
ELAPSED_DEFINE_ERROR(KernelNotDensity, MathStructure)
ELAPSED_DEFINE_ERROR(MassMismatch, MathStructure)
ELAPSED_DEFINE_ERROR(MassNotZero, MathStructure)
ELAPSED_DEFINE_ERROR(NoRootFound, MathStructure)
ELAPSED_DEFINE_ERROR(ContractionViolated, MathStructure)
ELAPSED_DEFINE_ERROR(KappaGeqOne, MathStructure)
ELAPSED_DEFINE_ERROR(CFLViolation, MathStructure)
ELAPSED_DEFINE_ERROR(NegativeDensity, Numerical)
ELAPSED_DEFINE_ERROR(QuadratureUnderflow, Numerical)
ELAPSED_DEFINE_ERROR(NoConvergence, Numerical)
ELAPSED_DEFINE_ERROR(WindowBelowFloor, Numerical)
ELAPSED_DEFINE_ERROR(EigensolverFailure, Numerical)

#undef ELAPSED_DEFINE_ERROR

// Precondition guard in the spirit of an assert that survives NDEBUG.
template <class E = DomainError>
inline void require(bool cond, const std::string& what) {
  if (!cond) throw E(what);
}

} // namespace elapsed
