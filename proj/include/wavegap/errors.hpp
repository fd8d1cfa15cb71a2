#pragma once

#include <stdexcept>
#include <string>

namespace wavegap {

/// Base of every error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define WAVEGAP_ERROR(Name)                 \
    struct Name : Error {                   \
        using Error::Error;                 \
    }

WAVEGAP_ERROR(RootCountError);
WAVEGAP_ERROR(StabilityError);
WAVEGAP_ERROR(PositivityError);
WAVEGAP_ERROR(ShapeError);
WAVEGAP_ERROR(NewtonDivergence);
WAVEGAP_ERROR(MonotonicityError);
WAVEGAP_ERROR(FrontLostError);
WAVEGAP_ERROR(DivisionError);
WAVEGAP_ERROR(ConvexConcaveError);
WAVEGAP_ERROR(ConvergenceError);
WAVEGAP_ERROR(NormalizationError);
WAVEGAP_ERROR(SupportError);
WAVEGAP_ERROR(UnboundedError);
WAVEGAP_ERROR(TailFitError);
WAVEGAP_ERROR(DegenerateError);
WAVEGAP_ERROR(NonPositiveError);
WAVEGAP_ERROR(CertificationFailure);
WAVEGAP_ERROR(PreconditionError);
WAVEGAP_ERROR(DomainError);
WAVEGAP_ERROR(BlowupError);
WAVEGAP_ERROR(HypothesisError);
WAVEGAP_ERROR(ConfigError);
WAVEGAP_ERROR(KernelError);

#undef WAVEGAP_ERROR

} // namespace wavegap
