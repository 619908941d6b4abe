#include <deque>
#include <map>

#include "worker.hpp"

namespace nkfg::live {

namespace {

using json = nlohmann::json;

struct CloudPipeline {
  Micros cloud_time{0};
  bool paused = false;
  std::deque<WireFrame> jobs;
  std::thread engine;
};

// The cloud server: runs the cloud partition of each pipeline and answers
// the edge once a frame is finished.
class Cloud {
 public:
  explicit Cloud(const RoleArgs& args) : worker_("cloud", args.port) {}

  int run() {
    return worker_.serve([this](const std::string& peer, std::shared_ptr<Link> link) {
      if (peer == "edge") {
        edge_ = link;
        link->start([this](WireFrame f) { on_edge(std::move(f)); }, [] {});
      } else if (peer == "coordinator") {
        link->start([this](WireFrame f) { on_command(parse_message(f)); },
                    [this] { worker_.coordinator_lost(); });
      }
    });
  }

 private:
  CloudPipeline& pipe(std::uint64_t id) {
    auto& slot = pipes_[id];
    if (!slot) {
      slot = std::make_unique<CloudPipeline>();
      slot->engine = std::thread([this, p = slot.get()] { engine(*p); });
    }
    return *slot;
  }

  void on_edge(WireFrame f) {
    if (f.payload.size() < 16) return;
    std::lock_guard lock(mu_);
    pipe(get_u64(f.payload.data())).jobs.push_back(std::move(f));
    cv_.notify_all();
  }

  void on_command(const json& c) {
    const auto op = c.value("op", "");
    if (op == "plan") {
      std::lock_guard lock(mu_);
      pipe(c.at("pipeline").get<std::uint64_t>()).cloud_time = Micros{c.at("cloud_us").get<std::int64_t>()};
    } else if (op == "pause" || op == "resume") {
      std::lock_guard lock(mu_);
      pipe(c.at("pipeline").get<std::uint64_t>()).paused = op == "pause";
      cv_.notify_all();
    } else if (op == "shutdown") {
      worker_.ack(c);
      worker_.shutdown(0);
    }
    worker_.ack(c);
  }

  void engine(CloudPipeline& p) {
    std::unique_lock lock(mu_);
    auto paused = [&] { return p.paused; };
    auto stop = [&] { return worker_.stopping(); };
    while (!stop()) {
      cv_.wait(lock, [&] { return stop() || (!p.paused && !p.jobs.empty()); });
      if (stop()) return;
      auto job = std::move(p.jobs.front());
      p.jobs.pop_front();
      if (!hold(lock, cv_, p.cloud_time, paused, stop)) return;
      WireFrame done{FrameKind::data, job.seq, static_cast<std::uint64_t>(mono_now().count()),
                     {job.payload.begin(), job.payload.begin() + 16}};
      if (edge_) edge_->send(std::move(done));
    }
  }

  Worker worker_;
  std::shared_ptr<Link> edge_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint64_t, std::unique_ptr<CloudPipeline>> pipes_;
};

}  // namespace

int run_cloud(const RoleArgs& args) { return Cloud(args).run(); }

}  // namespace nkfg::live
