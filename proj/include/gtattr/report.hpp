#pragma once

#include <array>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gtattr/error.hpp"
#include "json.hpp"

namespace gtattr {

enum class Method {
  kShapleyExact,
  kShapleyMonteCarlo,
  kLeaveOneOut,
  kAttentionFlow,
  kRollout,
  kRawAttention,
};

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::kShapleyExact: return "shapley-exact";
    case Method::kShapleyMonteCarlo: return "shapley-mc";
    case Method::kLeaveOneOut: return "loo";
    case Method::kAttentionFlow: return "attention-flow";
    case Method::kRollout: return "rollout";
    case Method::kRawAttention: return "raw-attention";
  }
  return "shapley-exact";
}

inline Method method_from_string(std::string_view s) {
  for (auto m : {Method::kShapleyExact, Method::kShapleyMonteCarlo, Method::kLeaveOneOut,
                 Method::kAttentionFlow, Method::kRollout, Method::kRawAttention}) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown attribution method '" + std::string(s) + "'");
}

/// Per-player values produced by one attribution method.
///
/// Everything except `metadata` is the deterministic payload: two runs with
/// the same inputs and seed produce identical payloads. Wall-clock data and
/// free-form notes go in `metadata`.
struct AttributionReport {
  Method method = Method::kShapleyExact;
  std::vector<double> values{};
  std::optional<std::vector<double>> std_error{};  // Monte Carlo only
  double v_grand = 0.0;
  std::optional<std::uint64_t> seed{};
  std::optional<std::uint64_t> m{};
  std::vector<std::string> labels{};  // empty, or one per player
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t n() const { return values.size(); }

  std::string label(std::size_t i) const {
    return i < labels.size() && !labels[i].empty() ? labels[i] : std::to_string(i);
  }

  friend bool operator==(const AttributionReport& a, const AttributionReport& b) {
    return a.method == b.method && a.values == b.values && a.std_error == b.std_error &&
           a.v_grand == b.v_grand && a.seed == b.seed && a.m == b.m && a.labels == b.labels &&
           a.metadata == b.metadata;
  }
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::array<char, 32> buf{};
  std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf.data();
}

/// The deterministic part of a report.
inline nlohmann::json report_payload_json(const AttributionReport& r) {
  nlohmann::json j;
  j["method"] = to_string(r.method);
  j["n"] = r.n();
  j["values"] = r.values;
  j["stderr"] = r.std_error ? nlohmann::json(*r.std_error) : nlohmann::json(nullptr);
  j["v_grand"] = r.v_grand;
  j["seed"] = r.seed ? nlohmann::json(*r.seed) : nlohmann::json(nullptr);
  j["m"] = r.m ? nlohmann::json(*r.m) : nlohmann::json(nullptr);
  j["labels"] = r.labels.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.labels);
  return j;
}

inline nlohmann::json report_to_json(const AttributionReport& r) {
  auto j = report_payload_json(r);
  j["metadata"] = r.metadata;
  return j;
}

inline AttributionReport report_from_json(const nlohmann::json& j) {
  try {
    AttributionReport r;
    r.method = method_from_string(j.at("method").get<std::string>());
    r.values = j.at("values").get<std::vector<double>>();
    if (j.at("n").get<std::size_t>() != r.values.size()) {
      throw ValidationError("report field n does not match the number of values");
    }
    if (!j.at("stderr").is_null()) r.std_error = j.at("stderr").get<std::vector<double>>();
    r.v_grand = j.at("v_grand").get<double>();
    if (!j.at("seed").is_null()) r.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("m").is_null()) r.m = j.at("m").get<std::uint64_t>();
    if (j.contains("labels") && !j.at("labels").is_null()) {
      r.labels = j.at("labels").get<std::vector<std::string>>();
    }
    if (j.contains("metadata")) r.metadata = j.at("metadata");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report document: ") + e.what());
  }
}

/// 17 significant digits, '.' separator regardless of locale.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

namespace detail {
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}
}  // namespace detail

/// CSV with columns player,label,value[,stderr] for external plotting.
inline void write_plot_table(const AttributionReport& r, std::ostream& out) {
  out << "player,label,value";
  if (r.std_error) out << ",stderr";
  out << '\n';
  for (std::size_t i = 0; i < r.n(); ++i) {
    out << i << ',' << detail::csv_field(r.label(i)) << ',' << format_double(r.values[i]);
    if (r.std_error) out << ',' << format_double((*r.std_error)[i]);
    out << '\n';
  }
}

}  // namespace gtattr
