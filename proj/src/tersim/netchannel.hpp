// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tersim/time.hpp"

namespace tersim {

// Interval during which every arriving message is lost (fault injection).
struct Outage {
  SimTime start{0};
  SimTime end{0};
  bool operator==(const Outage&) const = default;
};

struct ChannelParams {
  double base_delay = 0.0;  // seconds
  double jitter = 0.0;      // seconds, half-width of the uniform jitter
  double loss_prob = 0.0;
  std::uint64_t seed = 0;
  std::optional<Outage> outage;

  bool operator==(const ChannelParams&) const = default;
};

void validate(const ChannelParams& p);  // throws Error(kInvalidArgument)

// "vthd" (5 ms), "dsl" (40 +- 10 ms, 0.5% loss), "satellite" (300 +- 20 ms, 1% loss).
ChannelParams channel_preset(std::string_view name);  // throws Error(kInvalidArgument)
std::vector<std::string> channel_preset_names();

struct InTransit {
  SimTime deliver_at{0};
  std::vector<std::uint8_t> payload;
  bool drop = false;
};

// One direction of a simulated link. Single owner; not thread-safe.
class Channel {
 public:
  explicit Channel(const ChannelParams& params);

  void send(std::vector<std::uint8_t> bytes, SimTime now);

  // Everything due at `now`, ordered by delivery time then send order.
  std::vector<std::vector<std::uint8_t>> poll(SimTime now);

  const ChannelParams& params() const { return params_; }
  std::uint64_t sent() const { return sent_; }
  std::uint64_t delivered() const { return delivered_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t delivered_bytes() const { return delivered_bytes_; }
  std::size_t in_flight() const { return queue_.size(); }

 private:
  ChannelParams params_;
  std::mt19937_64 rng_;
  std::map<std::pair<SimTime, std::uint64_t>, InTransit> queue_;
  std::uint64_t sent_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t delivered_bytes_ = 0;
};

}  // namespace tersim
