// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>

namespace tersim {

// Simulated clock. Every component takes `now` from its caller.
using SimTime = std::chrono::microseconds;

inline double to_seconds(SimTime t) { return static_cast<double>(t.count()) * 1e-6; }

inline SimTime from_seconds(double s) {
  return SimTime{static_cast<SimTime::rep>(s * 1e6 + (s >= 0 ? 0.5 : -0.5))};
}

}  // namespace tersim
