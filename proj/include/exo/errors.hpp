#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace exo {

// Base for every error the library raises. Callers that only need a message
// catch this; callers that branch on the failure mode catch the subclass.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define EXO_DEFINE_ERROR(Name)                 \
    class Name : public Error {                \
    public:                                    \
        using Error::Error;                    \
    }

// facade model
EXO_DEFINE_ERROR(InvalidGrid);
EXO_DEFINE_ERROR(UnknownNode);
EXO_DEFINE_ERROR(SupportNodeImmutable);

// structural solver
EXO_DEFINE_ERROR(SingularSystem);
EXO_DEFINE_ERROR(NonFinite);

// fabrication
EXO_DEFINE_ERROR(NonPositiveReference);

// session / protocol
EXO_DEFINE_ERROR(ProtocolError);
EXO_DEFINE_ERROR(ClockRegression);
EXO_DEFINE_ERROR(ConfigError);
EXO_DEFINE_ERROR(ConnectionLost);

// statistics / analytics
EXO_DEFINE_ERROR(EmptySample);
EXO_DEFINE_ERROR(AllZeroDifferences);
EXO_DEFINE_ERROR(TooFewPoints);
EXO_DEFINE_ERROR(OutOfRangeItem);
EXO_DEFINE_ERROR(MissingPhase);
EXO_DEFINE_ERROR(NoPoseData);

#undef EXO_DEFINE_ERROR

// Raised by decode_message. `offset` is the byte position in the frame where
// decoding gave up.
class DecodeError : public Error {
public:
    DecodeError(std::size_t offset, std::string reason)
        : Error("decode error at byte " + std::to_string(offset) + ": " + reason),
          offset_(offset),
          reason_(std::move(reason)) {}

    std::size_t offset() const noexcept { return offset_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t offset_;
    std::string reason_;
};

}  // namespace exo
