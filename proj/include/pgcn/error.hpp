// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace pgcn {

// Base of every library error. name() is the stable identifier the CLI prints.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* name() const noexcept { return "Error"; }
};

#define PGCN_DEFINE_ERROR(Kind)                                   \
  class Kind : public Error {                                     \
   public:                                                        \
    using Error::Error;                                           \
    const char* name() const noexcept override { return #Kind; }  \
  };

// geometry
PGCN_DEFINE_ERROR(ParseError)
PGCN_DEFINE_ERROR(DuplicateElectrode)
PGCN_DEFINE_ERROR(EmptyMontage)
PGCN_DEFINE_ERROR(UnknownElectrode)
PGCN_DEFINE_ERROR(InvalidPartition)
// graph
PGCN_DEFINE_ERROR(IndexError)
PGCN_DEFINE_ERROR(DegenerateDistance)
PGCN_DEFINE_ERROR(IsolatedNode)
// diffcore
PGCN_DEFINE_ERROR(ShapeError)
PGCN_DEFINE_ERROR(NumericalError)
// model / cli
PGCN_DEFINE_ERROR(ConfigError)
// data / train
PGCN_DEFINE_ERROR(FormatError)
PGCN_DEFINE_ERROR(LabelError)
PGCN_DEFINE_ERROR(SplitError)
// diagnostics
PGCN_DEFINE_ERROR(UndefinedSmoothness)
PGCN_DEFINE_ERROR(RangeError)

#undef PGCN_DEFINE_ERROR

}  // namespace pgcn
