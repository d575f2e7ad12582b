#pragma once

#include <stdexcept>
#include <string>

namespace pohedge {

// Config and validation problems map to exit code 2, numerical faults to 4.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(kind) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define POHEDGE_NUMERICAL_ERROR(Name, Tag)                                  \
    class Name : public NumericalError {                                    \
    public:                                                                 \
        explicit Name(const std::string& what) : NumericalError(Tag, what) {} \
    };

POHEDGE_NUMERICAL_ERROR(DerivativeMissingError, "derivative-missing")
POHEDGE_NUMERICAL_ERROR(MeasureSignError, "measure-sign")
POHEDGE_NUMERICAL_ERROR(DegeneracyError, "degeneracy")
POHEDGE_NUMERICAL_ERROR(StepSizeError, "step-size")
POHEDGE_NUMERICAL_ERROR(SignedDensityError, "signed-density")
POHEDGE_NUMERICAL_ERROR(BoundViolationError, "bound-violation")
POHEDGE_NUMERICAL_ERROR(FilterStateError, "filter-state")
POHEDGE_NUMERICAL_ERROR(SupportError, "support")
POHEDGE_NUMERICAL_ERROR(GridError, "grid")
POHEDGE_NUMERICAL_ERROR(RangeError, "range")
POHEDGE_NUMERICAL_ERROR(SurfaceError, "surface")
POHEDGE_NUMERICAL_ERROR(SampleSizeError, "sample-size")
POHEDGE_NUMERICAL_ERROR(EmptySampleError, "empty-sample")

#undef POHEDGE_NUMERICAL_ERROR

}  // namespace pohedge
