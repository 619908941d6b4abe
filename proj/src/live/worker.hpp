#pragma once

#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nkfg/live/net.hpp"
#include "nkfg/live/roles.hpp"

namespace nkfg::live {

// Plumbing shared by the worker processes: the listening socket with its
// hello handshake, plus the coordinator link and its heartbeats.
class Worker {
 public:
  using json = nlohmann::json;
  using PeerHandler = std::function<void(const std::string& peer, std::shared_ptr<Link> link)>;

  explicit Worker(std::string role, std::uint16_t port) : role_(std::move(role)), listener_(listen_loopback(port)) {}

  const std::string& role() const { return role_; }

  // Announces readiness and serves connections until shut down.
  int serve(PeerHandler on_peer) {
    std::cout << "READY " << listener_.port << std::endl;
    heartbeat_ = std::thread([this] { heartbeat_loop(); });
    while (!stopping()) {
      auto fd = accept_for(listener_, Micros{100'000});
      if (!fd) continue;
      auto hello = read_frame(fd.get());
      if (!hello) continue;
      std::string peer;
      try {
        peer = parse_message(*hello).at("hello").get<std::string>();
      } catch (const std::exception&) {
        continue;
      }
      if (!write_frame(fd.get(), WireFrame::with_text(FrameKind::data, 0, 0, json{{"hello", role_}}.dump()))) {
        continue;
      }
      auto link = std::make_shared<Link>(std::move(fd));
      links_.push_back(link);
      if (peer == "coordinator") {
        std::lock_guard lock(mu_);
        coordinator_ = link;
      }
      on_peer(peer, link);
    }
    return exit_code_;
  }

  // Sends an event or ack to the coordinator, if one is attached.
  void emit(const json& message) {
    std::shared_ptr<Link> c;
    {
      std::lock_guard lock(mu_);
      c = coordinator_;
    }
    if (c) c->send_text(FrameKind::data, message.dump());
  }

  void ack(const json& command, json extra = json::object()) {
    extra["ack"] = command.value("id", 0);
    emit(extra);
  }

  void shutdown(int code) {
    std::shared_ptr<Link> c;
    {
      std::lock_guard lock(mu_);
      c = coordinator_;
    }
    if (c) c->flush();
    std::fflush(nullptr);
    ::_exit(code);
  }

  bool stopping() const { return stop_; }

  // A lost coordinator leaves nothing to serve.
  void coordinator_lost() { shutdown(3); }

 private:
  void heartbeat_loop() {
    std::uint64_t n = 0;
    while (!stopping()) {
      std::this_thread::sleep_for(kHeartbeatPeriod);
      emit({{"heartbeat", ++n}, {"role", role_}});
    }
  }

  std::string role_;
  Listener listener_;
  std::mutex mu_;
  std::shared_ptr<Link> coordinator_;
  std::vector<std::shared_ptr<Link>> links_;
  std::thread heartbeat_;
  std::atomic<bool> stop_{false};
  int exit_code_ = 0;
};

// Waits for `duration` of unpaused time. Returns false when `stop` is set.
inline bool hold(std::unique_lock<std::mutex>& lock, std::condition_variable& cv, Micros duration,
                 const std::function<bool()>& paused, const std::function<bool()>& stop) {
  auto remaining = duration;
  while (remaining.count() > 0) {
    if (stop()) return false;
    if (paused()) {
      cv.wait(lock);
      continue;
    }
    const auto start = mono_now();
    cv.wait_for(lock, remaining);
    remaining -= mono_now() - start;
  }
  return !stop();
}

}  // namespace nkfg::live
