#pragma once

#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "amod/gateway.hpp"
#include "amod/memory.hpp"
#include "amod/prompt.hpp"

namespace amod {

struct CollisionEvent {
  double time = 0;
  long step = 0;
  int vehicle_a = 0, vehicle_b = 0;
  double dist = 0;
  std::string decision_summary;  // scheduling/evolution decisions in force
};

inline std::string reflection_task_message(const CollisionEvent& ev) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "A collision occurred at t=" << ev.time << " s between vehicle "
     << ev.vehicle_a << " and vehicle " << ev.vehicle_b << " (separation "
     << ev.dist << " m). The attached image shows the scene at that step.\n"
     << "Decisions in force:\n"
     << ev.decision_summary << "\n"
     << "Analyze what went wrong and state, in two or three sentences, what the "
        "dispatcher or the grouping step should do differently in similar scenes.";
  return os.str();
}

// Feeds the collision-step scene and the decisions that led to it back to the
// model; the analysis is stored as a Reflection entry next to the originals.
// Gateway failure only flags the attempt, it never blocks the simulation.
inline std::optional<MemoryEntry> reflect_on_collision(
    MemoryStore& store, LmmGateway& gateway, const WorldState& snapshot,
    const BevImage& collision_bev, const CollisionEvent& ev, bool* failed = nullptr) {
  if (failed) *failed = false;
  PromptBundle bundle;
  bundle.variant = collision_bev.variant;
  bundle.system_message = bev_system_message(snapshot);
  bundle.task_message = reflection_task_message(ev);
  bundle.image = collision_bev;
  LmmExchange ex;
  try {
    ex = gateway.query(bundle);
  } catch (const GatewayError&) {
    if (failed) *failed = true;
    return std::nullopt;
  }
  MemoryEntry entry;
  entry.kind = MemoryKind::Reflection;
  entry.variant = collision_bev.variant;
  entry.image = std::make_shared<BevImage>(collision_bev);
  entry.prompt_text = bundle.task_message;
  entry.response_text = ex.response;
  return store.store(std::move(entry));
}

}  // namespace amod
