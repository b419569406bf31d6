#pragma once

#include <nlohmann/json.hpp>

#include "vesselgen/structmetrics.hpp"

namespace vesselgen::io {

inline nlohmann::json to_json(const ChannelReport& r) {
  return {{"component_count", r.component_count},
          {"branch_point_count", r.branch_point_count},
          {"trifurcation_count", r.trifurcation_count},
          {"loop_count", r.loop_count},
          {"foreground_fraction", r.foreground_fraction}};
}

inline nlohmann::json to_json(const StructReport& r) {
  return {{"artery", to_json(r.artery)},
          {"vein", to_json(r.vein)},
          {"crossing_pixel_count", r.crossing_pixel_count},
          {"empty_flag", r.empty_flag}};
}

/// Returns an empty string when `j` has the StructReport layout, otherwise
/// a description of the first problem found.
inline std::string struct_report_schema_error(const nlohmann::json& j) {
  if (!j.is_object()) return "report is not an object";
  for (const char* ch : {"artery", "vein"}) {
    if (!j.contains(ch) || !j[ch].is_object()) return std::string("missing channel ") + ch;
    for (const char* k : {"component_count", "branch_point_count", "trifurcation_count", "loop_count"})
      if (!j[ch].contains(k) || !j[ch][k].is_number_unsigned())
        return std::string(ch) + "." + k + " must be a non-negative integer";
    if (!j[ch].contains("foreground_fraction") || !j[ch]["foreground_fraction"].is_number())
      return std::string(ch) + ".foreground_fraction must be a number";
    const double f = j[ch]["foreground_fraction"].get<double>();
    if (f < 0.0 || f > 1.0) return std::string(ch) + ".foreground_fraction outside [0,1]";
  }
  if (!j.contains("crossing_pixel_count") || !j["crossing_pixel_count"].is_number_unsigned())
    return "crossing_pixel_count must be a non-negative integer";
  if (!j.contains("empty_flag") || !j["empty_flag"].is_boolean()) return "empty_flag must be boolean";
  return {};
}

}  // namespace vesselgen::io
