#pragma once

#include <chrono>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "certiprop/errors.hpp"
#include "certiprop/interval.hpp"
#include "certiprop/network.hpp"

namespace certiprop {

inline constexpr const char* kVersion = "0.1.0";

enum class Method { IBP, AA, DA, LB, EXACT };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::IBP: return "IBP";
    case Method::AA: return "AA";
    case Method::DA: return "DA";
    case Method::LB: return "LB";
    case Method::EXACT: return "EXACT";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "ibp" || s == "IBP") return Method::IBP;
  if (s == "aa" || s == "AA") return Method::AA;
  if (s == "da" || s == "DA") return Method::DA;
  if (s == "lb" || s == "LB") return Method::LB;
  if (s == "exact" || s == "EXACT") return Method::EXACT;
  throw ValidationError("unknown method '" + s + "'");
}

// Per-output-coordinate bounds produced by one method on one region.
struct BoundReport {
  Method method = Method::IBP;
  IntervalVector box;
  std::vector<double> widths;
  double max_width = 0.0;
  std::chrono::duration<double> wall_time{0};
  std::map<std::string, std::string> metadata;

  BoundReport() = default;
  BoundReport(Method m, IntervalVector b) : method(m), box(std::move(b)) {
    widths.reserve(box.dim());
    for (const auto& iv : box) {
      widths.push_back(iv.hi() - iv.lo());
      max_width = std::max(max_width, widths.back());
    }
  }
};

class Stopwatch {
public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  std::chrono::duration<double> elapsed() const { return std::chrono::steady_clock::now() - start_; }

private:
  std::chrono::steady_clock::time_point start_;
};

// Timing is omitted unless include_time is set so that reports stay
// byte-identical across runs.
inline nlohmann::json report_to_json(const BoundReport& r, bool include_time = false) {
  using detail::shortest;
  nlohmann::json lo = nlohmann::json::array(), hi = nlohmann::json::array(), w = nlohmann::json::array();
  for (std::size_t i = 0; i < r.box.dim(); ++i) {
    lo.push_back(shortest(r.box[i].lo()));
    hi.push_back(shortest(r.box[i].hi()));
    w.push_back(shortest(r.widths[i]));
  }
  nlohmann::json j = {{"method", method_name(r.method)},
                      {"lo", std::move(lo)},
                      {"hi", std::move(hi)},
                      {"widths", std::move(w)},
                      {"max_width", shortest(r.max_width)},
                      {"metadata", r.metadata}};
  if (include_time) j["wall_time_s"] = r.wall_time.count();
  return j;
}

inline void write_report_csv(std::ostream& os, const BoundReport& r, bool include_time = false) {
  using detail::shortest;
  os << "method,coord,lo,hi,width\n";
  for (std::size_t i = 0; i < r.box.dim(); ++i)
    os << method_name(r.method) << ',' << i << ',' << shortest(r.box[i].lo()) << ',' << shortest(r.box[i].hi())
       << ',' << shortest(r.widths[i]) << '\n';
  os << method_name(r.method) << ",max_width,,," << shortest(r.max_width) << '\n';
  os << method_name(r.method) << ",time_s,,," << (include_time ? shortest(r.wall_time.count()) : "") << '\n';
}

}  // namespace certiprop
