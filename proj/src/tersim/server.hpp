// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "tersim/netchannel.hpp"
#include "tersim/phantom.hpp"
#include "tersim/session.hpp"

namespace tersim {

struct ServeConfig {
  PhantomConfig phantom = phantom_preset("aaa_54mm");
  std::string phantom_name = "aaa_54mm";
  ChannelParams channel = channel_preset("vthd");
  std::string channel_name = "vthd";
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  SessionConfig session;
};

// Slave simulator behind an HTTP server:
//   GET /ws      WebSocket upgrade; binary frames carry one wire message each
//   GET /status  JSON link state and transfer rates
// One operator at a time; a second upgrade gets 409 Conflict.
class Server {
 public:
  // Binds immediately. Throws Error(kPortBusy) or Error(kIo).
  explicit Server(const ServeConfig& cfg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const;

  // Blocks until stop() is called.
  void run();

  // Thread-safe; run() returns shortly after.
  void stop();

  nlohmann::ordered_json status() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace tersim
