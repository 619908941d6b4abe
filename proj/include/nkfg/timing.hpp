#pragma once

#include "nkfg/units.hpp"

namespace nkfg {

// Durations of the individual repartitioning steps. Defaults are the
// measured testbed values.
struct TimingParams {
  Micros t_update{6'000'000};          // metadata update while paused
  Micros t_switch{980};                // dispatcher redirect
  Micros t_initialisation{1'900'000};  // bring up a new container pair
  Micros t_exec{600'000};              // start a pipeline inside running containers
  Micros t_build{0};                   // extra build step when the base image is not cached
  Micros t_standby_update{0};          // plan refresh of an idle standby pipeline

  friend bool operator==(const TimingParams&, const TimingParams&) = default;
};

inline void validate(const TimingParams& t) {
  for (auto d : {t.t_update, t.t_switch, t.t_initialisation, t.t_exec, t.t_build,
                 t.t_standby_update}) {
    if (d.count() < 0) throw ValidationError("timing parameters must be >= 0");
  }
}

}  // namespace nkfg
