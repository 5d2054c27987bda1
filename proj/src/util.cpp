// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include "tersim/util.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "tersim/error.hpp"

namespace tersim {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvalidPose: return "invalid-pose";
    case ErrorCode::kOutOfRig: return "out-of-rig";
    case ErrorCode::kInconsistentLengths: return "inconsistent-lengths";
    case ErrorCode::kNoContact: return "no-contact";
    case ErrorCode::kNotFrozen: return "not-frozen";
    case ErrorCode::kInsufficientSweep: return "insufficient-sweep";
    case ErrorCode::kOversize: return "oversize";
    case ErrorCode::kNotAMessage: return "not-a-message";
    case ErrorCode::kCorrupt: return "corrupt";
    case ErrorCode::kUnsupported: return "unsupported";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kProtocolViolation: return "protocol-violation";
    case ErrorCode::kTooFew: return "too-few";
    case ErrorCode::kDegenerateVariance: return "degenerate-variance";
    case ErrorCode::kUndefinedKappa: return "undefined-kappa";
    case ErrorCode::kDivisionDegenerate: return "division-degenerate";
    case ErrorCode::kUnpairedRecord: return "unpaired-record";
    case ErrorCode::kScenarioInvalid: return "scenario-invalid";
    case ErrorCode::kParse: return "parse-error";
    case ErrorCode::kIo: return "io-error";
    case ErrorCode::kSessionFailure: return "session-failure";
    case ErrorCode::kPortBusy: return "port-busy";
    case ErrorCode::kMeasurementFailed: return "measurement-failed";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

std::string format_double(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<std::uint64_t> parse_uint(std::string_view s) {
  s = trim(s);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace tersim
