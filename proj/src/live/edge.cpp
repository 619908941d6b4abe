#include <deque>
#include <map>

#include "nkfg/error.hpp"
#include "worker.hpp"

namespace nkfg::live {

namespace {

using json = nlohmann::json;

struct Arrival {
  std::uint64_t seq;
  Micros at;
};

struct EdgePipeline {
  std::uint64_t id = 0;
  std::uint64_t split = 0;
  Micros edge_time{0};
  std::size_t payload_bytes = 16;
  bool paused = false;
  bool retiring = false;
  bool done = false;  // cloud finished the frame in service
  std::deque<Arrival> queue;
  std::thread engine;
};

// The edge server hosts the dispatcher and the edge partition of each
// pipeline, each behind its own ingress queue. The cloud link is shaped.
class Edge {
 public:
  explicit Edge(const RoleArgs& args) : args_(args), worker_("edge", args.port) {
    cloud_ = std::make_shared<Link>(connect_loopback(args.cloud_port, kHandshakeTimeout, "edge"));
    if (!write_frame(cloud_->fd(), WireFrame::with_text(FrameKind::data, 0, 0, json{{"hello", "edge"}}.dump())) ||
        !read_frame(cloud_->fd())) {
      throw Error("edge: handshake with cloud failed");
    }
    cloud_->shape(ShaperConfig{});
    cloud_->start([this](WireFrame f) { on_cloud(std::move(f)); }, [this] { worker_.shutdown(3); });
  }

  int run() {
    return worker_.serve([this](const std::string& peer, std::shared_ptr<Link> link) {
      if (peer == "device") {
        link->start([this](WireFrame f) { on_device(std::move(f)); }, [] {});
      } else if (peer == "coordinator") {
        link->start([this](WireFrame f) { on_command(parse_message(f)); },
                    [this] { worker_.coordinator_lost(); });
      }
    });
  }

 private:
  void event(const std::string& kind, json body) {
    body["event"] = kind;
    body["t_us"] = mono_now().count();
    worker_.emit(body);
  }

  void on_device(WireFrame f) {
    std::lock_guard lock(mu_);
    const auto now = mono_now();
    auto it = pipes_.find(target_);
    event("frame_arrive", {{"seq", f.seq}, {"pipeline", target_}});
    if (it == pipes_.end()) {
      event("frame_drop", {{"seq", f.seq}, {"pipeline", target_}});
      return;
    }
    auto& p = *it->second;
    p.queue.push_back({f.seq, now});
    if (p.queue.size() > args_.queue_capacity) {
      event("frame_drop", {{"seq", p.queue.front().seq}, {"pipeline", p.id}});
      p.queue.pop_front();
    }
    cv_.notify_all();
  }

  void on_cloud(WireFrame f) {
    if (f.payload.size() < 8) return;
    const auto id = get_u64(f.payload.data());
    std::lock_guard lock(mu_);
    auto it = pipes_.find(id);
    if (it != pipes_.end()) it->second->done = true;
    cv_.notify_all();
  }

  void on_command(const json& c) {
    const auto op = c.value("op", "");
    if (op == "shape") {
      cloud_->shape({c.at("rate_mbps").get<double>(), c.at("burst_mb").get<double>(),
                     c.at("latency_ms").get<double>()});
    } else if (op == "plan") {
      std::lock_guard lock(mu_);
      const auto id = c.at("pipeline").get<std::uint64_t>();
      auto& slot = pipes_[id];
      const bool fresh = !slot;
      if (fresh) slot = std::make_unique<EdgePipeline>();
      slot->id = id;
      slot->split = c.at("split").get<std::uint64_t>();
      slot->edge_time = Micros{c.at("edge_us").get<std::int64_t>()};
      slot->payload_bytes = std::max<std::size_t>(16, c.at("payload_bytes").get<std::size_t>());
      slot->retiring = false;
      if (fresh) slot->engine = std::thread([this, p = slot.get()] { engine(*p); });
    } else if (op == "pause" || op == "resume") {
      std::lock_guard lock(mu_);
      auto it = pipes_.find(c.at("pipeline").get<std::uint64_t>());
      if (it != pipes_.end()) it->second->paused = op == "pause";
      cv_.notify_all();
    } else if (op == "switch") {
      std::lock_guard lock(mu_);
      target_ = c.at("pipeline").get<std::uint64_t>();
    } else if (op == "retire") {
      std::lock_guard lock(mu_);
      auto it = pipes_.find(c.at("pipeline").get<std::uint64_t>());
      if (it != pipes_.end()) it->second->retiring = true;
      cv_.notify_all();
    } else if (op == "shutdown") {
      worker_.ack(c);
      worker_.shutdown(0);
    }
    worker_.ack(c);
  }

  void engine(EdgePipeline& p) {
    std::unique_lock lock(mu_);
    auto paused = [&] { return p.paused; };
    auto stop = [&] { return worker_.stopping(); };
    while (!stop()) {
      cv_.wait(lock, [&] { return stop() || (!p.paused && !p.queue.empty()) || (p.retiring && p.queue.empty()); });
      if (stop()) return;
      if (p.queue.empty()) {
        // Drained after retirement; the slot stays so late commands are harmless.
        cv_.wait(lock, [&] { return stop() || !p.retiring || !p.queue.empty(); });
        continue;
      }
      const auto frame = p.queue.front();
      p.queue.pop_front();
      event("frame_start", {{"seq", frame.seq}, {"pipeline", p.id}, {"split", p.split}});
      if (!hold(lock, cv_, p.edge_time, paused, stop)) return;
      WireFrame out{FrameKind::data, frame.seq, static_cast<std::uint64_t>(mono_now().count()),
                    std::vector<std::uint8_t>(p.payload_bytes, 0)};
      put_u64(out.payload.data(), p.id);
      put_u64(out.payload.data() + 8, p.split);
      p.done = false;
      cloud_->send(std::move(out));
      cv_.wait(lock, [&] { return stop() || (p.done && !p.paused); });
      if (stop()) return;
      event("frame_complete", {{"seq", frame.seq},
                               {"pipeline", p.id},
                               {"split", p.split},
                               {"latency_us", (mono_now() - frame.at).count()}});
    }
  }

  RoleArgs args_;
  Worker worker_;
  std::shared_ptr<Link> cloud_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint64_t, std::unique_ptr<EdgePipeline>> pipes_;
  std::uint64_t target_ = 0;
};

}  // namespace

int run_edge(const RoleArgs& args) { return Edge(args).run(); }

}  // namespace nkfg::live
