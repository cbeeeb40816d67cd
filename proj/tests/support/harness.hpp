#pragma once

#include <string>
#include <vector>

#include "encprov/extractor.hpp"
#include "encprov/target.hpp"
#include "encprov/verifier.hpp"

namespace harness {

using namespace encprov;

inline std::vector<DecodedAction> collect(const TraceProgram& p, const TargetConfig& cfg = {}) {
  std::vector<DecodedAction> out;
  run_target(p, [&out](const Action& a, std::uint16_t t) { out.push_back({a, t}); }, cfg);
  return out;
}

/// Feeds the stream to a fresh verifier and returns its anomalies.
inline std::vector<AnomalyReport> verify(const EnclaveModel& m, const std::vector<DecodedAction>& stream) {
  Verifier v(m);
  for (const auto& d : stream) v.process(d.action, d.thread_id);
  return v.anomalies();
}

inline std::string letters(const std::vector<DecodedAction>& s) {
  std::string out;
  for (const auto& d : s) out += tag_letter(d.action.type);
  return out;
}

}  // namespace harness
