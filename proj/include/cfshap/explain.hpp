/*
 * Copyright 2026 The cfshap Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Contrastive explanations. Players are interpretable attributes; the grand
// coalition is a +/-1 direction per attribute. A coalition S is realized by
// the direction spec that keeps the grand entries of S and zeroes the rest,
// and its value is the target prediction on G(shift(z, spec)). The empty
// coalition is the original image G(z) itself.

#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfshap/errors.hpp"
#include "cfshap/oracle.hpp"
#include "cfshap/shapley.hpp"
#include "cfshap/shift.hpp"
#include "json.hpp"

namespace cfshap {

inline constexpr const char* kExplanationFormat = "cfshap-explanation/1";

// Names used when a caller does not provide any and m == 5.
inline const std::vector<std::string>& face_attribute_names() {
  static const std::vector<std::string> names{"Young", "Heavy Makeup", "Blond Hair", "Bald",
                                              "Male"};
  return names;
}

inline std::vector<std::string> default_attribute_names(int m) {
  if (m == 5) return face_attribute_names();
  std::vector<std::string> names;
  for (int i = 0; i < m; ++i) names.push_back("attr" + std::to_string(i));
  return names;
}

inline void check_grand_direction(std::span<const int> grand) {
  if (grand.empty()) throw DomainError("grand direction must have at least one attribute");
  for (int g : grand) {
    if (g != 1 && g != -1) throw DomainError("grand direction entries must be +1 or -1");
  }
}

// "+1,-1,..." with no zeros.
inline std::vector<int> parse_grand_direction(std::string_view text) {
  const DirectionSpec spec = DirectionSpec::parse(text);
  std::vector<int> grand;
  for (double e : spec.entries()) grand.push_back(static_cast<int>(e));
  check_grand_direction(grand);
  return grand;
}

inline DirectionSpec coalition_to_spec(Coalition coalition, std::span<const int> grand) {
  check_grand_direction(grand);
  if (static_cast<std::size_t>(coalition.num_players()) != grand.size())
    throw ShapeError("coalition_to_spec: coalition has " +
                     std::to_string(coalition.num_players()) + " players, grand direction " +
                     std::to_string(grand.size()));
  Vector e(grand.size(), 0.0);
  for (std::size_t i = 0; i < grand.size(); ++i) {
    if (coalition.contains(static_cast<int>(i))) e[i] = grand[i];
  }
  return DirectionSpec(std::move(e));
}

// Coalition mask -> value. First insert wins; reads may run concurrently.
class ValueCache {
 public:
  std::optional<double> find(std::uint32_t mask) const {
    std::shared_lock lock(mu_);
    auto it = values_.find(mask);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  double insert(std::uint32_t mask, double value) {
    std::unique_lock lock(mu_);
    return values_.emplace(mask, value).first->second;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return values_.size();
  }

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::uint32_t, double> values_;
};

// Value of one coalition. With `local_shift` the counterfactual latent is
// computed here and the oracle only generates and scores; otherwise the
// oracle's composite value op is used. `target_calls` counts target
// evaluations actually issued (cache hits issue none).
inline double contrastive_value(Oracle& oracle, const ShiftPredictorParams* local_shift,
                                std::span<const double> z, Coalition coalition,
                                std::span<const int> grand, ValueCache* cache,
                                std::uint64_t* target_calls = nullptr) {
  if (cache) {
    if (auto hit = cache->find(coalition.mask())) return *hit;
  }
  const DirectionSpec spec = coalition_to_spec(coalition, grand);
  double v = 0.0;
  try {
    if (coalition.mask() == 0) {
      v = oracle.predict_target(oracle.generate(z));
    } else if (local_shift) {
      v = oracle.predict_target(oracle.generate(shift_infer(*local_shift, z, spec)));
    } else {
      v = oracle.value(z, spec, true);
    }
  } catch (const std::exception& e) {
    throw EvaluationError("evaluating coalition mask " + std::to_string(coalition.mask()) +
                          " (spec " + spec.to_string() + "): " + e.what());
  }
  if (target_calls) ++*target_calls;
  if (cache) v = cache->insert(coalition.mask(), v);
  return v;
}

struct ExplanationRequest {
  Vector z;
  std::vector<int> grand;  // +/-1 per attribute
  std::vector<std::string> names;
  ShapleyMethod method = ShapleyMethod::kExact;
  std::uint64_t permutations = 1000;  // sampled only
  std::uint64_t seed = 0;             // sampled only
  bool use_cache = true;

  void validate() const {
    check_grand_direction(grand);
    if (names.size() != grand.size())
      throw ShapeError("explanation request: " + std::to_string(names.size()) + " names for " +
                       std::to_string(grand.size()) + " attributes");
    std::set<std::string> unique(names.begin(), names.end());
    if (unique.size() != names.size()) throw DomainError("explanation request: duplicate names");
    if (method == ShapleyMethod::kSampled && permutations < 1)
      throw DomainError("explanation request: permutations must be >= 1");
  }
};

struct AttributionRow {
  std::string name;
  int direction = 1;  // +1 increased, -1 decreased
  double value = 0.0;

  bool operator==(const AttributionRow&) const = default;
};

struct Explanation {
  std::vector<AttributionRow> rows;
  double original_prediction = 0.0;        // v(empty)
  double counterfactual_prediction = 0.0;  // v(grand)
  double efficiency_residual = 0.0;
  // target(G(shift(z, 0))) - target(G(z)); zero for an exact-identity shift.
  double empty_coalition_drift = 0.0;
  std::uint64_t oracle_calls = 0;
  ShapleyMethod method = ShapleyMethod::kExact;
  std::uint64_t permutations = 0;
  std::uint64_t seed = 0;

  bool operator==(const Explanation&) const = default;
};

inline Explanation explain(const ExplanationRequest& request, Oracle& oracle,
                           const ShiftPredictorParams* local_shift = nullptr) {
  request.validate();
  const int m = static_cast<int>(request.grand.size());
  const OracleDescriptor meta = oracle.meta();
  if (meta.num_attrs != m)
    throw ShapeError("explain: oracle has " + std::to_string(meta.num_attrs) +
                     " attributes, request has " + std::to_string(m));
  require_size(request.z, static_cast<std::size_t>(meta.latent_dim), "explain z");
  if (!local_shift && !meta.supports_composite_value)
    throw DomainError("explain: oracle has no composite value op and no shift predictor was given");
  if (request.method == ShapleyMethod::kExact && m > kMaxPlayers)
    throw DomainError("explain: exact enumeration is limited to 30 attributes; use sampling");

  std::uint64_t calls = 0;
  std::optional<ValueCache> cache;
  if (request.use_cache) cache.emplace();
  ValueCache* cache_ptr = cache ? &*cache : nullptr;

  // One round trip for the whole enumeration when the oracle scores
  // coalitions itself.
  if (cache_ptr && request.method == ShapleyMethod::kExact && !local_shift) {
    const std::uint32_t count = std::uint32_t{1} << m;
    std::vector<ValueQuery> queries;
    for (std::uint32_t mask = 1; mask < count; ++mask)
      queries.push_back({request.z, coalition_to_spec(Coalition(mask, m), request.grand), true});
    std::vector<double> values;
    try {
      values = oracle.value_batch(queries);
    } catch (const std::exception& e) {
      throw EvaluationError(std::string("batched coalition evaluation failed: ") + e.what());
    }
    if (values.size() != queries.size())
      throw EvaluationError("batched coalition evaluation returned the wrong count");
    for (std::uint32_t mask = 1; mask < count; ++mask) cache_ptr->insert(mask, values[mask - 1]);
    calls += values.size();
  }

  auto game = [&](Coalition s) {
    return contrastive_value(oracle, local_shift, request.z, s, request.grand, cache_ptr, &calls);
  };
  const Attribution a = request.method == ShapleyMethod::kExact
                            ? shapley_exact(m, game)
                            : shapley_sampled(m, game, request.permutations, request.seed);

  Explanation out;
  for (int i = 0; i < m; ++i)
    out.rows.push_back({request.names[i], request.grand[i], a.phi[i]});
  out.original_prediction = a.v_empty;
  out.counterfactual_prediction = a.v_grand;
  out.efficiency_residual = a.efficiency_residual();
  out.method = a.method;
  out.permutations = a.permutations;
  out.seed = a.seed;

  const DirectionSpec zero = DirectionSpec::zeros(static_cast<std::size_t>(m));
  double through_shift = 0.0;
  try {
    through_shift = local_shift
                        ? oracle.predict_target(oracle.generate(shift_infer(*local_shift, request.z, zero)))
                        : oracle.value(request.z, zero, false);
  } catch (const std::exception& e) {
    throw EvaluationError(std::string("evaluating empty-coalition drift: ") + e.what());
  }
  ++calls;
  out.empty_coalition_drift = through_shift - out.original_prediction;
  out.oracle_calls = calls;
  return out;
}

// ---------------------------------------------------------------------------
// Efficiency audit.

struct AuditReport {
  double sum = 0.0;         // sum of attributions
  double difference = 0.0;  // counterfactual - original
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline AuditReport efficiency_audit(std::span<const double> values, double original,
                                    double counterfactual, double tolerance) {
  if (!(tolerance > 0.0)) throw DomainError("efficiency_audit: tolerance must be > 0");
  AuditReport r;
  for (double v : values) r.sum += v;
  r.difference = counterfactual - original;
  r.residual = std::abs(r.sum - r.difference);
  r.tolerance = tolerance;
  r.pass = r.residual <= tolerance;
  return r;
}

inline AuditReport efficiency_audit(const std::vector<AttributionRow>& rows, double original,
                                    double counterfactual, double tolerance) {
  Vector v;
  for (const auto& r : rows) v.push_back(r.value);
  return efficiency_audit(v, original, counterfactual, tolerance);
}

// ---------------------------------------------------------------------------
// Rendering.

enum class RenderFormat { kTable, kCsv, kStructured };

inline std::string format_fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

// Shortest representation that parses back to the same double.
inline std::string format_roundtrip(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline const char* direction_arrow(int direction) { return direction > 0 ? "↑" : "↓"; }

inline std::string method_name(ShapleyMethod m) {
  return m == ShapleyMethod::kExact ? "exact" : "sampled";
}

inline nlohmann::json explanation_to_json(const Explanation& e) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : e.rows)
    rows.push_back({{"name", r.name}, {"direction", r.direction}, {"value", r.value}});
  nlohmann::json method = {{"kind", method_name(e.method)}};
  if (e.method == ShapleyMethod::kSampled) {
    method["permutations"] = e.permutations;
    method["seed"] = e.seed;
  }
  return {{"format", kExplanationFormat},
          {"method", method},
          {"attributions", rows},
          {"original_prediction", e.original_prediction},
          {"counterfactual_prediction", e.counterfactual_prediction},
          {"efficiency_residual", e.efficiency_residual},
          {"empty_coalition_drift", e.empty_coalition_drift},
          {"oracle_calls", e.oracle_calls}};
}

inline Explanation explanation_from_json(const nlohmann::json& j) {
  Explanation e;
  try {
    if (j.at("format").get<std::string>() != kExplanationFormat)
      throw FormatError("explanation: unsupported format");
    const auto& method = j.at("method");
    const std::string kind = method.at("kind").get<std::string>();
    if (kind == "exact") {
      e.method = ShapleyMethod::kExact;
    } else if (kind == "sampled") {
      e.method = ShapleyMethod::kSampled;
      e.permutations = method.at("permutations").get<std::uint64_t>();
      e.seed = method.at("seed").get<std::uint64_t>();
    } else {
      throw FormatError("explanation: unknown method '" + kind + "'");
    }
    for (const auto& r : j.at("attributions"))
      e.rows.push_back({r.at("name").get<std::string>(), r.at("direction").get<int>(),
                        r.at("value").get<double>()});
    e.original_prediction = j.at("original_prediction").get<double>();
    e.counterfactual_prediction = j.at("counterfactual_prediction").get<double>();
    e.efficiency_residual = j.at("efficiency_residual").get<double>();
    e.empty_coalition_drift = j.at("empty_coalition_drift").get<double>();
    e.oracle_calls = j.at("oracle_calls").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("explanation: ") + ex.what());
  }
  return e;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

// Table: one line of "Name arrow value" cells at 2 decimals, then the
// predictions and the residual.
inline std::string render_explanation(const Explanation& e, RenderFormat format) {
  std::string out;
  switch (format) {
    case RenderFormat::kTable: {
      for (std::size_t i = 0; i < e.rows.size(); ++i) {
        if (i) out += " | ";
        out += e.rows[i].name + " " + direction_arrow(e.rows[i].direction) + " " +
               format_fixed2(e.rows[i].value);
      }
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "\noriginal %s | counterfactual %s | difference %s | residual %.3g\n",
                    format_fixed2(e.original_prediction).c_str(),
                    format_fixed2(e.counterfactual_prediction).c_str(),
                    format_fixed2(e.counterfactual_prediction - e.original_prediction).c_str(),
                    e.efficiency_residual);
      out += buf;
      return out;
    }
    case RenderFormat::kCsv:
      out = "attribute,direction,value\n";
      for (const auto& r : e.rows)
        out += csv_field(r.name) + "," + (r.direction > 0 ? "+1" : "-1") + "," +
               format_roundtrip(r.value) + "\n";
      return out;
    case RenderFormat::kStructured:
      return explanation_to_json(e).dump(2) + "\n";
  }
  return out;
}

// Parses the csv rendering back into rows.
inline std::vector<AttributionRow> parse_attribution_csv(const std::string& text) {
  std::vector<AttributionRow> rows;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "attribute,direction,value")
    throw FormatError("attribution csv: bad header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cur += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 3) throw FormatError("attribution csv: expected 3 fields");
    AttributionRow r;
    r.name = fields[0];
    r.direction = fields[1] == "+1" ? 1 : fields[1] == "-1" ? -1 : 0;
    if (r.direction == 0) throw FormatError("attribution csv: bad direction '" + fields[1] + "'");
    const char* b = fields[2].data();
    auto [ptr, ec] = std::from_chars(b, b + fields[2].size(), r.value);
    if (ec != std::errc() || ptr != b + fields[2].size())
      throw FormatError("attribution csv: bad value '" + fields[2] + "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Published face-attribute attributions: four original/counterfactual image
// pairs over (Young, Heavy Makeup, Blond Hair, Bald, Male), two decimals.
// Original and counterfactual attractiveness scores are only reported for
// the first pair (0.73 -> 0.12).

struct PublishedRow {
  int image = 0;
  std::array<double, 5> values{};
  std::array<int, 5> directions{};
  std::optional<double> original;
  std::optional<double> counterfactual;
};

inline const std::vector<PublishedRow>& published_rows() {
  static const std::vector<PublishedRow> rows{
      {1, {-0.28, -0.02, -0.03, -0.34, 0.07}, {-1, -1, -1, 1, 1}, 0.73, 0.12},
      {2, {-0.20, -0.07, -0.03, -0.23, -0.04}, {-1, -1, -1, 1, -1}, std::nullopt, std::nullopt},
      {3, {0.23, 0.37, 0.15, 0.10, -0.05}, {1, 1, 1, -1, 1}, std::nullopt, std::nullopt},
      {4, {0.16, 0.18, 0.13, 0.23, 0.09}, {1, 1, 1, -1, -1}, std::nullopt, std::nullopt},
  };
  return rows;
}

inline constexpr double kPublishedAuditTolerance = 0.025;

enum class AuditStatus { kPass, kFail, kUnavailable };

struct PublishedAudit {
  int image = 0;
  double sum = 0.0;
  AuditStatus status = AuditStatus::kUnavailable;
  std::optional<AuditReport> report;  // present when predictions are known
};

inline std::string audit_status_name(AuditStatus s) {
  switch (s) {
    case AuditStatus::kPass:
      return "pass";
    case AuditStatus::kFail:
      return "FAIL";
    case AuditStatus::kUnavailable:
      return "UNAVAILABLE";
  }
  return "?";
}

// Rows whose predictions are unknown are reported as unavailable; callers may
// supply (original, counterfactual) per image number.
inline std::vector<PublishedAudit> audit_published(
    double tolerance, const std::map<int, std::pair<double, double>>& predictions = {}) {
  std::vector<PublishedAudit> out;
  for (const PublishedRow& row : published_rows()) {
    PublishedAudit a;
    a.image = row.image;
    for (double v : row.values) a.sum += v;
    std::optional<std::pair<double, double>> pred;
    if (row.original && row.counterfactual) pred = {{*row.original, *row.counterfactual}};
    if (auto it = predictions.find(row.image); it != predictions.end()) pred = it->second;
    if (pred) {
      a.report = efficiency_audit(row.values, pred->first, pred->second, tolerance);
      a.status = a.report->pass ? AuditStatus::kPass : AuditStatus::kFail;
    }
    out.push_back(a);
  }
  return out;
}

inline Explanation published_explanation(const PublishedRow& row) {
  Explanation e;
  for (std::size_t i = 0; i < 5; ++i)
    e.rows.push_back({face_attribute_names()[i], row.directions[i], row.values[i]});
  e.original_prediction = row.original.value_or(std::nan(""));
  e.counterfactual_prediction = row.counterfactual.value_or(std::nan(""));
  return e;
}

}  // namespace cfshap
