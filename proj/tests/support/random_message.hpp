// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>

#include "tersim/protocol.hpp"

namespace tersim::testing {

inline Message random_message(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g;
  switch (rng() % 6) {
    case 0: {
      PoseCommand pc;
      pc.pose.position = {u(rng) * 0.1, u(rng) * 0.1, u(rng) * 0.1};
      pc.pose.orientation = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized();
      return pc;
    }
    case 1:
      return ForceSample{{u(rng) * 10, u(rng) * 10, u(rng) * 10}};
    case 2: {
      UsFrameMsg f;
      f.width = static_cast<std::uint16_t>(rng() % 9);
      f.height = static_cast<std::uint16_t>(rng() % 9);
      f.frame_id = static_cast<std::uint32_t>(rng());
      f.pixel_spacing_um = 1 + static_cast<std::uint32_t>(rng() % 1000);
      f.frozen = rng() & 1;
      f.pixels.resize(static_cast<std::size_t>(f.width) * f.height);
      for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng());
      return f;
    }
    case 3:
      return Heartbeat{};
    case 4:
      return SessionControl{static_cast<SessionOp>(rng() % 6)};
    default:
      return StatusReport{rng(), rng(), rng()};
  }
}

}  // namespace tersim::testing
