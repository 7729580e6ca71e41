// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace pex {

/// Base of every error the toolkit throws on bad input or state.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PEX_DEFINE_ERROR(Name)         \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

PEX_DEFINE_ERROR(ShapeError);      // tensor / sequence shape disagreement
PEX_DEFINE_ERROR(FormatError);     // template precondition violated
PEX_DEFINE_ERROR(SchemaError);     // record violates a dataset schema
PEX_DEFINE_ERROR(IngestionError);  // unreadable or malformed input file
PEX_DEFINE_ERROR(RetrievalError);
PEX_DEFINE_ERROR(DecodeError);     // id outside the vocabulary
PEX_DEFINE_ERROR(PoolingError);    // max-pool over no positions
PEX_DEFINE_ERROR(LossError);       // loss undefined or non-finite
PEX_DEFINE_ERROR(ParameterError);  // hyper-parameter outside its domain
PEX_DEFINE_ERROR(BatchError);
PEX_DEFINE_ERROR(EvalError);
PEX_DEFINE_ERROR(ConfigError);
PEX_DEFINE_ERROR(CheckpointError);

#undef PEX_DEFINE_ERROR

}  // namespace pex
