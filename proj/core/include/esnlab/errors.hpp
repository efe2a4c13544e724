#pragma once

#include <stdexcept>
#include <string>

namespace esnlab {

/// Base class for all esnlab failures; carries a stable machine-readable code.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define ESNLAB_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                     \
    public:                                                         \
        explicit Name(const std::string& what) : Error(#Name, what) {} \
    }

ESNLAB_DEFINE_ERROR(NonFiniteState);
ESNLAB_DEFINE_ERROR(DegenerateSignal);
ESNLAB_DEFINE_ERROR(SpectralRadiusFailure);
ESNLAB_DEFINE_ERROR(DimensionMismatch);
ESNLAB_DEFINE_ERROR(SliceTooShort);
ESNLAB_DEFINE_ERROR(SingularSystem);
ESNLAB_DEFINE_ERROR(DatasetTooShort);
ESNLAB_DEFINE_ERROR(ShapeMismatch);
ESNLAB_DEFINE_ERROR(ZeroVariance);
ESNLAB_DEFINE_ERROR(EmptyInput);
ESNLAB_DEFINE_ERROR(RankDeficient);
ESNLAB_DEFINE_ERROR(FactorizationFailure);
ESNLAB_DEFINE_ERROR(InvalidArgument);
ESNLAB_DEFINE_ERROR(IoError);

#undef ESNLAB_DEFINE_ERROR

}  // namespace esnlab
