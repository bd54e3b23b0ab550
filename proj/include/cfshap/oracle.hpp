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

// Model-agnostic boundary around generator, attribute classifier, target
// model and shift predictor, plus the line-delimited wire protocol used to
// reach external model stacks.
//
// Wire format: one JSON object per newline-terminated line, never
// pretty-printed.
//
//   request   {"id":7,"op":"value","z":[...],"spec":[...],"bypass_empty":true}
//   response  {"id":7,"ok":true,"result":0.42}
//             {"id":7,"ok":false,"error":"unsupported op"}
//
// Ops: meta, generate (z), shift (z, spec), predict_attrs (x),
// predict_target (x), value (z, spec, bypass_empty), batch (requests),
// shutdown. A line that cannot be parsed is answered with id -1.

#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cfshap/errors.hpp"
#include "cfshap/numerics.hpp"
#include "cfshap/shift.hpp"
#include "cfshap/world.hpp"
#include "json.hpp"

namespace cfshap {

struct OracleDescriptor {
  int latent_dim = 0;
  int image_dim = 0;
  int num_attrs = 0;
  bool supports_gradients = false;
  bool supports_shift = false;
  bool supports_composite_value = false;

  bool operator==(const OracleDescriptor&) const = default;
};

struct ValueQuery {
  Vector z;
  DirectionSpec spec;
  bool bypass_empty = true;
};

class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual OracleDescriptor meta() = 0;
  virtual Vector generate(std::span<const double> z) = 0;
  virtual Vector predict_attrs(std::span<const double> x) = 0;
  virtual double predict_target(std::span<const double> x) = 0;
  virtual Vector shift(std::span<const double> z, const DirectionSpec& spec) = 0;
  // target(G(M(z, spec))); with bypass_empty an all-zero spec yields
  // target(G(z)) without touching the shift predictor.
  virtual double value(std::span<const double> z, const DirectionSpec& spec,
                       bool bypass_empty) = 0;

  virtual std::vector<double> value_batch(const std::vector<ValueQuery>& queries) {
    std::vector<double> out;
    out.reserve(queries.size());
    for (const ValueQuery& q : queries) out.push_back(value(q.z, q.spec, q.bypass_empty));
    return out;
  }
};

// Direct calls into a SyntheticWorld and an optional shift predictor.
class InProcessOracle final : public Oracle {
 public:
  explicit InProcessOracle(SyntheticWorld world,
                           std::optional<ShiftPredictorParams> shift = std::nullopt)
      : world_(std::move(world)), shift_(std::move(shift)) {
    validate_world(world_);
    if (shift_) {
      shift_->validate();
      if (shift_->latent_dim != world_.latent_dim || shift_->num_attrs != world_.num_attrs)
        throw ShapeError("InProcessOracle: shift predictor does not match world dimensions");
    }
  }

  const SyntheticWorld& world() const { return world_; }
  const std::optional<ShiftPredictorParams>& shift_params() const { return shift_; }

  OracleDescriptor meta() override {
    return {world_.latent_dim, world_.image_dim, world_.num_attrs, true,
            shift_.has_value(), shift_.has_value()};
  }
  Vector generate(std::span<const double> z) override { return cfshap::generate(world_, z); }
  Vector predict_attrs(std::span<const double> x) override {
    return cfshap::predict_attrs(world_, x);
  }
  double predict_target(std::span<const double> x) override {
    return cfshap::predict_target(world_, x);
  }
  Vector shift(std::span<const double> z, const DirectionSpec& spec) override {
    if (!shift_) throw Error("oracle has no shift predictor loaded");
    return shift_infer(*shift_, z, spec);
  }
  double value(std::span<const double> z, const DirectionSpec& spec,
               bool bypass_empty) override {
    if (bypass_empty && spec.is_zero()) {
      require_size(z, static_cast<std::size_t>(world_.latent_dim), "value z");
      return predict_target(generate(z));
    }
    return predict_target(generate(shift(z, spec)));
  }

 private:
  SyntheticWorld world_;
  std::optional<ShiftPredictorParams> shift_;
};

// ---------------------------------------------------------------------------
// Messages.

struct WireMessage {
  std::int64_t id = 0;
  std::string op;
  nlohmann::json payload = nlohmann::json::object();  // op-specific fields

  nlohmann::json to_json() const {
    nlohmann::json j = payload.is_object() ? payload : nlohmann::json::object();
    j["id"] = id;
    j["op"] = op;
    return j;
  }
};

inline std::string encode_line(const nlohmann::json& j) { return j.dump() + "\n"; }

inline nlohmann::json descriptor_to_json(const OracleDescriptor& d) {
  return {{"latent_dim", d.latent_dim},
          {"image_dim", d.image_dim},
          {"num_attrs", d.num_attrs},
          {"supports_gradients", d.supports_gradients},
          {"supports_shift", d.supports_shift},
          {"supports_composite_value", d.supports_composite_value}};
}

inline OracleDescriptor descriptor_from_json(const nlohmann::json& j, const std::string& raw) {
  try {
    OracleDescriptor d;
    d.latent_dim = j.at("latent_dim").get<int>();
    d.image_dim = j.at("image_dim").get<int>();
    d.num_attrs = j.at("num_attrs").get<int>();
    d.supports_gradients = j.value("supports_gradients", false);
    d.supports_shift = j.value("supports_shift", false);
    d.supports_composite_value = j.value("supports_composite_value", false);
    if (d.latent_dim < 1 || d.image_dim < 1 || d.num_attrs < 1)
      throw ProtocolError("meta: dimensions must be positive", raw);
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("meta: ") + e.what(), raw);
  }
}

// Validated response envelope.
struct WireResponse {
  std::int64_t id = 0;
  bool ok = false;
  nlohmann::json result;
  std::string error;
  std::string raw;

  // Throws RemoteError when the server reported a failure.
  const nlohmann::json& expect_ok() const {
    if (!ok) throw RemoteError(error.empty() ? "remote failure" : error);
    return result;
  }
};

inline WireResponse parse_response(const nlohmann::json& j, const std::string& raw) {
  if (!j.is_object()) throw ProtocolError("response is not an object", raw);
  if (!j.contains("id") || !j["id"].is_number_integer())
    throw ProtocolError("response missing integer 'id'", raw);
  if (!j.contains("ok") || !j["ok"].is_boolean())
    throw ProtocolError("response missing boolean 'ok'", raw);
  WireResponse r;
  r.id = j["id"].get<std::int64_t>();
  r.ok = j["ok"].get<bool>();
  r.raw = raw;
  if (r.ok) {
    if (!j.contains("result")) throw ProtocolError("ok response missing 'result'", raw);
    r.result = j["result"];
  } else {
    r.error = j.contains("error") && j["error"].is_string() ? j["error"].get<std::string>()
                                                            : "remote failure";
  }
  return r;
}

inline WireResponse parse_response_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("unparseable response: ") + e.what(), line);
  }
  return parse_response(j, line);
}

inline Vector json_vector(const nlohmann::json& j, const std::string& raw) {
  try {
    Vector v = j.get<Vector>();
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("expected number array: ") + e.what(), raw);
  }
}

inline double json_number(const nlohmann::json& j, const std::string& raw) {
  if (!j.is_number()) throw ProtocolError("expected number result", raw);
  return j.get<double>();
}

// Responses matched to the batch's request ids. Throws ProtocolError on a
// missing, duplicate or unexpected id.
inline std::map<std::int64_t, WireResponse> match_responses(
    const std::vector<WireMessage>& requests, const std::vector<WireResponse>& responses) {
  std::set<std::int64_t> expected;
  for (const WireMessage& m : requests) expected.insert(m.id);
  std::map<std::int64_t, WireResponse> by_id;
  for (const WireResponse& r : responses) {
    if (!expected.count(r.id))
      throw ProtocolError("response for unknown id " + std::to_string(r.id), r.raw);
    if (!by_id.emplace(r.id, r).second)
      throw ProtocolError("duplicate response id " + std::to_string(r.id), r.raw);
  }
  for (std::int64_t id : expected) {
    if (!by_id.count(id)) throw ProtocolError("missing response for id " + std::to_string(id));
  }
  return by_id;
}

inline void check_unique_ids(const std::vector<WireMessage>& requests) {
  std::set<std::int64_t> seen;
  for (const WireMessage& m : requests) {
    if (!seen.insert(m.id).second)
      throw ProtocolError("duplicate request id " + std::to_string(m.id) + " in batch");
  }
}

// ---------------------------------------------------------------------------
// Serving side: answers protocol lines from any Oracle. Over the wire
// gradients are never offered.

class OracleServer {
 public:
  explicit OracleServer(Oracle& backend) : backend_(backend) {}

  bool shutdown_requested() const { return shutdown_; }

  // One request line in, one response line out (no trailing newline).
  std::string handle_line(const std::string& line) {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      return error_response(-1, std::string("malformed request: ") + e.what()).dump();
    }
    return handle(req).dump();
  }

  // Reads until shutdown or end of stream. Returns the number of requests served.
  std::size_t serve(std::istream& in, std::ostream& out) {
    std::string line;
    std::size_t served = 0;
    while (!shutdown_ && std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      out << handle_line(line) << '\n';
      out.flush();
      ++served;
    }
    return served;
  }

  nlohmann::json handle(const nlohmann::json& req) {
    std::int64_t id = -1;
    if (req.is_object() && req.contains("id") && req["id"].is_number_integer())
      id = req["id"].get<std::int64_t>();
    try {
      if (!req.is_object()) return error_response(id, "request is not an object");
      if (id < 0 && !(req.contains("id") && req["id"].is_number_integer()))
        return error_response(-1, "request missing integer 'id'");
      if (!req.contains("op") || !req["op"].is_string())
        return error_response(id, "request missing string 'op'");
      const std::string op = req["op"].get<std::string>();
      return ok_response(id, dispatch(op, req));
    } catch (const UnsupportedOp&) {
      return error_response(id, "unsupported op");
    } catch (const nlohmann::json::exception& e) {
      return error_response(id, std::string("bad payload: ") + e.what());
    } catch (const std::exception& e) {
      return error_response(id, e.what());
    }
  }

 private:
  struct UnsupportedOp {};

  static nlohmann::json ok_response(std::int64_t id, nlohmann::json result) {
    return {{"id", id}, {"ok", true}, {"result", std::move(result)}};
  }
  static nlohmann::json error_response(std::int64_t id, const std::string& msg) {
    return {{"id", id}, {"ok", false}, {"error", msg}};
  }

  nlohmann::json dispatch(const std::string& op, const nlohmann::json& req) {
    if (op == "meta") {
      OracleDescriptor d = backend_.meta();
      d.supports_gradients = false;
      return descriptor_to_json(d);
    }
    if (op == "generate") return backend_.generate(req.at("z").get<Vector>());
    if (op == "predict_attrs") return backend_.predict_attrs(req.at("x").get<Vector>());
    if (op == "predict_target") return backend_.predict_target(req.at("x").get<Vector>());
    if (op == "shift")
      return backend_.shift(req.at("z").get<Vector>(), DirectionSpec(req.at("spec").get<Vector>()));
    if (op == "value")
      return backend_.value(req.at("z").get<Vector>(), DirectionSpec(req.at("spec").get<Vector>()),
                            req.value("bypass_empty", true));
    if (op == "batch") {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& sub : req.at("requests")) {
        if (sub.is_object() && sub.value("op", "") == "batch") {
          out.push_back(error_response(sub.value("id", std::int64_t{-1}), "nested batch"));
          continue;
        }
        out.push_back(handle(sub));
      }
      return out;
    }
    if (op == "shutdown") {
      shutdown_ = true;
      return nullptr;
    }
    throw UnsupportedOp{};
  }

  Oracle& backend_;
  bool shutdown_ = false;
};

}  // namespace cfshap
