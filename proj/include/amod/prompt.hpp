#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "amod/bev.hpp"
#include "amod/memory.hpp"
#include "amod/rng.hpp"
#include "amod/world.hpp"

namespace amod {

// Context the caller may persist into memory after a model-backed decision.
struct DecisionContext {
  std::shared_ptr<const BevImage> image;
  std::string prompt_text;
  std::string response_text;
};

struct PromptBundle {
  std::string system_message;
  std::string task_message;
  BevImage image;
  std::vector<MemoryEntry> exemplars;  // oldest first
  BevVariant variant = BevVariant::Scheduling;

  uint64_t hash() const {
    std::string all = system_message + "\x1f" + task_message;
    for (const auto& e : exemplars) all += "\x1f" + e.prompt_text + "\x1f" + e.response_text;
    uint64_t h = fnv1a64(all);
    // fold the image bytes in as well
    uint64_t ih = 0xcbf29ce484222325ULL;
    for (uint8_t b : image.rgb) {
      ih ^= b;
      ih *= 0x100000001b3ULL;
    }
    return h ^ (ih + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  }
};

namespace detail {

inline std::string format_pos(const Vec2& p) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << "(" << p.x << ", " << p.y << ")";
  return os.str();
}

}  // namespace detail

inline std::string bev_system_message(const WorldState& world) {
  std::ostringstream os;
  os << "You are the dispatch and coordination assistant of an autonomous "
        "mobility-on-demand fleet operating on an urban grid.\n"
     << "The attached top-down image shows the scene. Dark lines are road "
        "boundaries; light gray lines are lane centerlines. Traffic drives on the "
     << (world.map && world.map->drive_side == DriveSide::LeftHand ? "left (LHD layout)"
                                                                   : "right (RHD layout)")
     << ", one lane per direction, offset from the street axis.\n"
     << "Green rectangles are free vehicles, yellow rectangles are occupied "
        "vehicles, red squares are pending passenger requests. Every vehicle and "
        "request carries a unique integer ID printed next to its marker.\n"
     << "Respond with a single JSON object and no other text.";
  return os.str();
}

// Task text for a scheduling query: enumerates pending requests and free
// vehicles and demands the structured assignment schema.
inline std::string scheduling_task_message(const WorldState& world) {
  std::ostringstream os;
  os << "Assign pending requests to free vehicles.\n";
  os << "Pending requests:\n";
  for (const auto& r : world.requests)
    if (r.status == RequestStatus::Pending)
      os << "  request " << r.id << ": pickup " << detail::format_pos(r.pickup)
         << ", dropoff " << detail::format_pos(r.dropoff) << ", waiting since t="
         << r.spawn_time << "\n";
  os << "Free vehicles:\n";
  for (const auto& v : world.vehicles)
    if (v.is_free())
      os << "  vehicle " << v.id << ": at " << detail::format_pos(v.position()) << "\n";
  os << "Each vehicle seats one request. Minimize overall waiting, paying "
        "attention to the worst-served request.\n";
  os << "Answer with JSON of the form {\"assign\": [[request_id, vehicle_id], ...]} "
        "using only the IDs listed above. Leave out requests you cannot serve.";
  return os.str();
}

// Task text for a graph-evolution query: enumerates vehicles and demands the
// risk-group schema.
inline std::string graph_evolution_task_message(const WorldState& world) {
  std::ostringstream os;
  os << "Identify groups of vehicles that risk colliding within the next few "
        "seconds and must plan their motion jointly.\n";
  os << "Vehicles:\n";
  for (const auto& v : world.vehicles) {
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "  vehicle " << v.id << ": at " << detail::format_pos(v.position())
       << ", heading " << v.heading << " rad, speed " << v.speed << " m/s\n";
  }
  os << "Vehicles that are far apart or diverging belong in their own group. "
        "Groups must not overlap.\n";
  os << "Answer with JSON of the form {\"groups\": [[vehicle_id, ...], ...]} "
        "covering only IDs listed above.";
  return os.str();
}

inline PromptBundle compose_prompt(const WorldState& world, BevImage image,
                                   BevVariant variant,
                                   std::vector<MemoryEntry> exemplars) {
  PromptBundle b;
  b.variant = variant;
  b.system_message = bev_system_message(world);
  b.task_message = variant == BevVariant::Scheduling
                       ? scheduling_task_message(world)
                       : graph_evolution_task_message(world);
  b.image = std::move(image);
  std::sort(exemplars.begin(), exemplars.end(),
            [](const MemoryEntry& a, const MemoryEntry& b) {
              return a.insert_index < b.insert_index;
            });
  b.exemplars = std::move(exemplars);
  return b;
}

}  // namespace amod
