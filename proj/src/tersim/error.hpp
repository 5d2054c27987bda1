// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tersim {

// Values are mirrored one-to-one by tersim_status in include/tersim/tersim.h.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kInvalidPose,
  kOutOfRig,
  kInconsistentLengths,
  kNoContact,
  kNotFrozen,
  kInsufficientSweep,
  kOversize,
  kNotAMessage,
  kCorrupt,
  kUnsupported,
  kTruncated,
  kProtocolViolation,
  kTooFew,
  kDegenerateVariance,
  kUndefinedKappa,
  kDivisionDegenerate,
  kUnpairedRecord,
  kScenarioInvalid,
  kParse,
  kIo,
  kSessionFailure,
  kPortBusy,
  kMeasurementFailed,
  kInternal,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tersim
