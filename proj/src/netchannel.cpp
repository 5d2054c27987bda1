// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include "tersim/netchannel.hpp"

#include <algorithm>
#include <cmath>

#include "tersim/error.hpp"
#include "tersim/util.hpp"

namespace tersim {

void validate(const ChannelParams& p) {
  if (!(p.base_delay >= 0.0) || !std::isfinite(p.base_delay))
    throw Error(ErrorCode::kInvalidArgument, "channel: base_delay must be >= 0");
  if (!(p.jitter >= 0.0) || !std::isfinite(p.jitter))
    throw Error(ErrorCode::kInvalidArgument, "channel: jitter must be >= 0");
  if (!(p.loss_prob >= 0.0 && p.loss_prob <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "channel: loss_prob must lie in [0, 1]");
  if (p.outage && p.outage->end < p.outage->start)
    throw Error(ErrorCode::kInvalidArgument, "channel: outage ends before it starts");
}

ChannelParams channel_preset(std::string_view name) {
  if (name == "vthd") return {0.005, 0.0, 0.0, 0, std::nullopt};
  if (name == "dsl") return {0.040, 0.010, 0.005, 0, std::nullopt};
  if (name == "satellite") return {0.300, 0.020, 0.01, 0, std::nullopt};
  throw Error(ErrorCode::kInvalidArgument, "unknown channel preset '" + std::string(name) + "'");
}

std::vector<std::string> channel_preset_names() { return {"vthd", "dsl", "satellite"}; }

Channel::Channel(const ChannelParams& params) : params_(params), rng_(params.seed) {
  validate(params_);
}

void Channel::send(std::vector<std::uint8_t> bytes, SimTime now) {
  // Two draws per message regardless of outcome keep the schedule a function of the send trace.
  const double u_loss = unit_double(rng_());
  const double u_jitter = unit_double(rng_());
  const double offset_us = (2.0 * u_jitter - 1.0) * params_.jitter * 1e6;
  const SimTime delay{std::llround(params_.base_delay * 1e6 + offset_us)};

  InTransit m;
  m.deliver_at = now + std::max(delay, SimTime{0});
  m.drop = u_loss < params_.loss_prob;
  m.payload = std::move(bytes);
  queue_.emplace(std::make_pair(m.deliver_at, sent_), std::move(m));
  ++sent_;
}

std::vector<std::vector<std::uint8_t>> Channel::poll(SimTime now) {
  std::vector<std::vector<std::uint8_t>> out;
  auto it = queue_.begin();
  while (it != queue_.end() && it->first.first <= now) {
    InTransit& m = it->second;
    const bool in_outage =
        params_.outage && m.deliver_at >= params_.outage->start && m.deliver_at < params_.outage->end;
    if (m.drop || in_outage) {
      ++dropped_;
    } else {
      ++delivered_;
      delivered_bytes_ += m.payload.size();
      out.push_back(std::move(m.payload));
    }
    it = queue_.erase(it);
  }
  return out;
}

}  // namespace tersim
