#pragma once

#include <stdexcept>
#include <string>

namespace ctpnet {

// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CTPNET_DEFINE_ERROR(Name)              \
  class Name : public Error {                  \
   public:                                     \
    explicit Name(const std::string& what_arg) \
        : Error(#Name ": " + what_arg) {}      \
  }

// numeric engine
CTPNET_DEFINE_ERROR(ShapeMismatch);
CTPNET_DEFINE_ERROR(RankTooLow);
CTPNET_DEFINE_ERROR(NotScalar);

// series preparation
CTPNET_DEFINE_ERROR(ParseError);
CTPNET_DEFINE_ERROR(MissingValue);
CTPNET_DEFINE_ERROR(TooFewRows);
CTPNET_DEFINE_ERROR(DegenerateChannel);
CTPNET_DEFINE_ERROR(SeriesTooShort);
CTPNET_DEFINE_ERROR(IndivisibleLength);
CTPNET_DEFINE_ERROR(ConstantSeries);
CTPNET_DEFINE_ERROR(NoSignificantPeriod);

// model / training
CTPNET_DEFINE_ERROR(ConfigInvalid);
CTPNET_DEFINE_ERROR(DataEmpty);
CTPNET_DEFINE_ERROR(IoError);

#undef CTPNET_DEFINE_ERROR

}  // namespace ctpnet
