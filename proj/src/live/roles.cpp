#include "nkfg/live/roles.hpp"

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <iostream>
#include <map>

#include "nkfg/error.hpp"

namespace nkfg::live {

using json = nlohmann::json;

int run_device(const RoleArgs& args);
int run_edge(const RoleArgs& args);
int run_cloud(const RoleArgs& args);
int run_coordinator(const RoleArgs& args);

FrameKind kind_for_op(const std::string& op) {
  if (op == "plan") return FrameKind::plan;
  if (op == "pause") return FrameKind::pause;
  if (op == "resume") return FrameKind::resume;
  if (op == "switch") return FrameKind::switch_;
  return FrameKind::data;
}

json parse_message(const WireFrame& frame) {
  auto j = json::parse(frame.text(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("control message is not a JSON object");
  return j;
}

int run_role(const RoleArgs& args) {
  if (args.name == "device") return run_device(args);
  if (args.name == "edge") return run_edge(args);
  if (args.name == "cloud") return run_cloud(args);
  if (args.name == "coordinator") return run_coordinator(args);
  throw ConfigError("role: unknown role \"" + args.name + "\"");
}

}  // namespace nkfg::live
