// Copyright (C) 2026 tersim contributors
// SPDX-License-Identifier: Apache-2.0

#include "tersim/server.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <mutex>
#include <thread>
#include <variant>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "tersim/error.hpp"
#include "tersim/util.hpp"

namespace tersim {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::size_t kMaxQueuedWrites = 512;
constexpr auto kHttpTimeout = std::chrono::seconds(30);

struct Connected {
  std::uint64_t id;
};
struct Disconnected {
  std::uint64_t id;
};
struct Inbound {
  std::uint64_t id;
  std::vector<std::uint8_t> bytes;
};
using SlaveEvent = std::variant<Connected, Disconnected, Inbound>;

class WsSession;

}  // namespace

struct Server::Impl {
  ServeConfig cfg;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread slave_thread;
  std::atomic<bool> stopping{false};

  std::mutex inbox_mu;
  std::deque<SlaveEvent> inbox;

  // io thread only
  std::weak_ptr<WsSession> operator_session;
  std::uint64_t next_conn_id = 1;
  std::atomic<std::uint64_t> operator_id{0};

  mutable std::mutex snap_mu;
  ojson snapshot;

  void push(SlaveEvent e) {
    std::lock_guard lk(inbox_mu);
    inbox.push_back(std::move(e));
  }

  void accept();
  void slave_loop();
  void send_to(std::uint64_t id, std::vector<std::uint8_t> bytes);
  void close(std::uint64_t id);
};

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& s, Server::Impl* impl, std::uint64_t id) : ws_(std::move(s)), impl_(impl), id_(id) {}

  std::uint64_t id() const { return id_; }

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.binary(true);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  void send(std::vector<std::uint8_t> bytes) {
    if (closing_) return;
    if (outq_.size() >= kMaxQueuedWrites) {
      ++dropped_;
      return;
    }
    outq_.push_back(std::move(bytes));
    if (outq_.size() == 1) write_next();
  }

  void close() {
    if (closing_) return;
    closing_ = true;
    ws_.async_close(websocket::close_reason(websocket::close_code::policy_error, "protocol violation"),
                    [self = shared_from_this()](beast::error_code) { self->finished(); });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) {
      spdlog::warn("websocket handshake failed: {}", ec.message());
      finished();
      return;
    }
    spdlog::info("operator {} connected", id_);
    impl_->push(Connected{id_});
    read();
  }

  void read() {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      finished();
      return;
    }
    if (ws_.got_text()) {
      buf_.consume(buf_.size());
      read();
      return;
    }
    const auto data = buf_.cdata();
    std::vector<std::uint8_t> bytes(net::buffers_begin(data), net::buffers_end(data));
    buf_.consume(buf_.size());
    if (!closing_) impl_->push(Inbound{id_, std::move(bytes)});
    read();
  }

  void write_next() {
    ws_.async_write(net::buffer(outq_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->outq_.clear();
        return;
      }
      self->outq_.pop_front();
      if (!self->outq_.empty()) self->write_next();
    });
  }

  void finished() {
    if (done_) return;
    done_ = true;
    std::uint64_t expected = id_;
    if (impl_->operator_id.compare_exchange_strong(expected, 0)) {
      spdlog::info("operator {} disconnected", id_);
      impl_->push(Disconnected{id_});
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buf_;
  std::deque<std::vector<std::uint8_t>> outq_;
  Server::Impl* impl_;
  std::uint64_t id_;
  bool closing_ = false;
  bool done_ = false;
  std::uint64_t dropped_ = 0;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& s, Server::Impl* impl) : stream_(std::move(s)), impl_(impl) {}

  void run() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(kHttpTimeout);
    http::async_read(stream_, buf_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    const std::string target(req_.target());
    if (websocket::is_upgrade(req_)) {
      if (target != "/ws") return respond(http::status::not_found, R"({"error":"websocket endpoint is /ws"})");
      std::uint64_t expected = 0;
      const std::uint64_t id = impl_->next_conn_id++;
      if (!impl_->operator_id.compare_exchange_strong(expected, id))
        return respond(http::status::conflict, R"({"error":"an operator is already connected"})");
      stream_.expires_never();
      auto ws = std::make_shared<WsSession>(stream_.release_socket(), impl_, id);
      impl_->operator_session = ws;
      ws->run(std::move(req_));
      return;
    }
    if (req_.method() == http::verb::get && (target == "/status" || target.rfind("/status?", 0) == 0)) {
      std::lock_guard lk(impl_->snap_mu);
      return respond(http::status::ok, impl_->snapshot.dump());
    }
    respond(http::status::not_found, R"({"error":"not found"})");
  }

  void respond(http::status status, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::server, "tersim");
    res->set(http::field::content_type, "application/json");
    res->set(http::field::access_control_allow_origin, "*");
    res->keep_alive(req_.keep_alive() && status == http::status::ok);
    res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec || !res->keep_alive()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
  Server::Impl* impl_;
};

ojson pose_json(const Pose& p) {
  const auto& q = p.orientation;
  return {{"position", {p.position.x(), p.position.y(), p.position.z()}},
          {"orientation", {q.w(), q.x(), q.y(), q.z()}}};
}

}  // namespace

void Server::Impl::accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (!stopping) spdlog::warn("accept failed: {}", ec.message());
    } else {
      std::make_shared<HttpSession>(std::move(socket), this)->run();
    }
    if (!stopping) accept();
  });
}

void Server::Impl::send_to(std::uint64_t id, std::vector<std::uint8_t> bytes) {
  net::post(ioc, [this, id, bytes = std::move(bytes)]() mutable {
    if (auto s = operator_session.lock(); s && s->id() == id) s->send(std::move(bytes));
  });
}

void Server::Impl::close(std::uint64_t id) {
  net::post(ioc, [this, id] {
    if (auto s = operator_session.lock(); s && s->id() == id) s->close();
  });
}

void Server::Impl::slave_loop() {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const SessionConfig& sc = cfg.session;

  SlaveState ss;
  std::uint64_t connections = 0;
  auto make_channel = [&](std::uint64_t salt) {
    ChannelParams p = cfg.channel;
    p.seed = splitmix64(cfg.channel.seed ^ salt);
    return Channel(p);
  };
  Channel up = make_channel(1);
  Channel down = make_channel(2);
  std::uint64_t current = 0;
  std::uint32_t seq = 0;
  std::uint64_t frames_sent = 0;
  std::uint64_t violations = 0;
  std::string last_violation;
  std::uint64_t up_mark = 0, down_mark = 0;
  SimTime next_rate{0};

  auto next = t0;
  while (!stopping) {
    next += std::chrono::duration_cast<clock::duration>(sc.tick);
    std::this_thread::sleep_until(next);
    const SimTime now = std::chrono::duration_cast<SimTime>(clock::now() - t0);

    std::deque<SlaveEvent> events;
    {
      std::lock_guard lk(inbox_mu);
      events.swap(inbox);
    }
    for (auto& ev : events) {
      if (const auto* c = std::get_if<Connected>(&ev)) {
        current = c->id;
        ++connections;
        up = make_channel(2 * connections + 1);
        down = make_channel(2 * connections + 2);
        // A new operator starts a new sequence space.
        const LinkPhase phase = ss.link.state == LinkPhase::kClosed ? LinkPhase::kIdle : ss.link.state;
        const SimTime last_hb = ss.link.last_heartbeat_rx;
        ss.link = LinkState{};
        ss.link.state = phase;
        ss.link.last_heartbeat_rx = last_hb;
        ss.last_freeze_ctl_seq.reset();
        seq = 0;
      } else if (const auto* d = std::get_if<Disconnected>(&ev)) {
        if (d->id == current) current = 0;
      } else if (auto* in = std::get_if<Inbound>(&ev)) {
        if (in->id == current) up.send(std::move(in->bytes), now);
      }
    }

    for (auto& bytes : up.poll(now)) {
      if (current == 0) break;
      try {
        slave_receive(ss, decode(bytes), now, sc);
      } catch (const Error& e) {
        ++violations;
        last_violation = e.what();
        spdlog::warn("closing operator {}: {}", current, e.what());
        ss.halted = true;
        ss.link.state = LinkPhase::kSafeStop;
        close(current);
        current = 0;
      }
    }

    std::vector<Message> outs;
    try {
      outs = slave_tick(ss, sc, cfg.phantom, now);
    } catch (const Error& e) {
      spdlog::error("slave tick failed: {}", e.what());
    }
    for (const auto& m : outs) {
      if (std::holds_alternative<UsFrameMsg>(m)) ++frames_sent;
      down.send(encode(m, seq++, static_cast<std::uint64_t>(now.count())), now);
    }
    for (auto& bytes : down.poll(now))
      if (current != 0) send_to(current, std::move(bytes));

    if (now >= next_rate) {
      ss.rx_bytes_per_s = up.delivered_bytes() - up_mark;
      ss.tx_bytes_per_s = down.delivered_bytes() - down_mark;
      up_mark = up.delivered_bytes();
      down_mark = down.delivered_bytes();
      next_rate = now + std::chrono::seconds(1);
    }

    ojson snap{{"link_state", link_phase_name(ss.link.state)},
               {"halted", ss.halted},
               {"operator_connected", current != 0},
               {"in_contact", ss.in_contact},
               {"rx_bytes_per_s", ss.rx_bytes_per_s},
               {"tx_bytes_per_s", ss.tx_bytes_per_s},
               {"rtt_estimate_us", ss.rtt_estimate_us},
               {"frames_sent", frames_sent},
               {"frozen", ss.frozen_frame.has_value()},
               {"probe", pose_json(ss.actual_probe)},
               {"contact_force_n", {ss.contact_force.x(), ss.contact_force.y(), ss.contact_force.z()}},
               {"protocol_violations", violations},
               {"last_violation", last_violation},
               {"phantom", cfg.phantom_name},
               {"channel", cfg.channel_name},
               {"uptime_s", to_seconds(now)}};
    std::lock_guard lk(snap_mu);
    snapshot = std::move(snap);
  }
}

Server::Server(const ServeConfig& cfg) : impl_(std::make_unique<Impl>()) {
  impl_->cfg = cfg;
  validate(cfg.phantom);
  validate(cfg.channel);
  beast::error_code ec;
  const auto addr = net::ip::make_address(cfg.bind_address, ec);
  if (ec) throw Error(ErrorCode::kInvalidArgument, "invalid bind address " + cfg.bind_address);
  const tcp::endpoint ep{addr, cfg.port};
  auto& acc = impl_->acceptor;
  acc.open(ep.protocol(), ec);
  if (!ec) acc.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(ep, ec);
  if (ec == net::error::address_in_use || ec == net::error::access_denied)
    throw Error(ErrorCode::kPortBusy, "port " + std::to_string(cfg.port) + " is unavailable: " + ec.message());
  if (!ec) acc.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot listen on " + cfg.bind_address + ":" + std::to_string(cfg.port) + ": " +
                                          ec.message());
  impl_->snapshot = {{"link_state", link_phase_name(LinkPhase::kIdle)}, {"halted", false}, {"operator_connected", false}};
}

Server::~Server() {
  stop();
  if (impl_->slave_thread.joinable()) impl_->slave_thread.join();
}

std::uint16_t Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
  spdlog::info("serving phantom '{}' over '{}' on {}:{}", impl_->cfg.phantom_name, impl_->cfg.channel_name,
               impl_->cfg.bind_address, port());
  impl_->slave_thread = std::thread([this] { impl_->slave_loop(); });
  impl_->accept();
  impl_->ioc.run();
  impl_->stopping = true;
  if (impl_->slave_thread.joinable()) impl_->slave_thread.join();
}

void Server::stop() {
  impl_->stopping = true;
  impl_->ioc.stop();
}

nlohmann::ordered_json Server::status() const {
  std::lock_guard lk(impl_->snap_mu);
  return impl_->snapshot;
}

}  // namespace tersim
