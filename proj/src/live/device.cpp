#include <cmath>

#include "nkfg/error.hpp"
#include "worker.hpp"

namespace nkfg::live {

namespace {

using json = nlohmann::json;

// The camera: emits fixed-size frames to the edge at a constant rate once
// the coordinator says start.
class Device {
 public:
  explicit Device(const RoleArgs& args) : args_(args), worker_("device", args.port) {
    edge_ = std::make_shared<Link>(connect_loopback(args.edge_port, kHandshakeTimeout, "device"));
    if (!write_frame(edge_->fd(), WireFrame::with_text(FrameKind::data, 0, 0, json{{"hello", "device"}}.dump())) ||
        !read_frame(edge_->fd())) {
      throw Error("device: handshake with edge failed");
    }
    edge_->start([](WireFrame) {}, [this] { worker_.shutdown(3); });
  }

  int run() {
    return worker_.serve([this](const std::string& peer, std::shared_ptr<Link> link) {
      if (peer != "coordinator") return;
      link->start([this](WireFrame f) { on_command(parse_message(f)); },
                  [this] { worker_.coordinator_lost(); });
    });
  }

 private:
  void on_command(const json& c) {
    const auto op = c.value("op", "");
    if (op == "start" && !source_.joinable() && args_.fps > 0.0) {
      source_ = std::thread([this] { emit_frames(); });
    } else if (op == "shutdown") {
      worker_.ack(c);
      worker_.shutdown(0);
    }
    worker_.ack(c);
  }

  void emit_frames() {
    const auto t0 = mono_now();
    for (std::uint64_t k = 0; !worker_.stopping(); ++k) {
      const auto due = t0 + Micros{static_cast<std::int64_t>(std::floor(static_cast<double>(k) * 1e6 / args_.fps))};
      const auto wait = due - mono_now();
      if (wait.count() > 0) std::this_thread::sleep_for(wait);
      edge_->send({FrameKind::data, k, static_cast<std::uint64_t>(mono_now().count()),
                   std::vector<std::uint8_t>(args_.payload_bytes, 0)});
    }
  }

  RoleArgs args_;
  Worker worker_;
  std::shared_ptr<Link> edge_;
  std::thread source_;
};

}  // namespace

int run_device(const RoleArgs& args) { return Device(args).run(); }

}  // namespace nkfg::live
