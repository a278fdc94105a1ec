#include "ctcp/trace.hpp"

#include <json.hpp>

namespace ctcp {

std::string TraceRecord::to_json() const {
  nlohmann::ordered_json j;
  j["t"] = time;
  j["side"] = side;
  j["ev"] = event;
  for (const auto& f : fields) j[std::string(f.key)] = f.value;
  return j.dump();
}

Tracer Tracer::to_stream(std::ostream& os) {
  return Tracer([&os](const TraceRecord& r) { os << r.to_json() << '\n'; });
}

}  // namespace ctcp
