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

// Oracle client speaking the line protocol to a child process over its
// standard input/output. POSIX only.

#pragma once

#include <fcntl.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "cfshap/oracle.hpp"

namespace cfshap {

// Owns a child process started with `/bin/sh -c command`.
class LineChannel {
 public:
  explicit LineChannel(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0) throw ConnectionError(std::string("pipe: ") + std::strerror(errno));
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw ConnectionError(std::string("pipe: ") + std::strerror(errno));
    }
    pid_ = fork();
    if (pid_ < 0) {
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) close(fd);
      throw ConnectionError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) close(fd);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    // A dead child must surface as a write error, not SIGPIPE.
    signal(SIGPIPE, SIG_IGN);
    out_ = fdopen(to_child[1], "w");
    in_ = fdopen(from_child[0], "r");
    if (!out_ || !in_) throw ConnectionError("fdopen failed");
  }

  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  ~LineChannel() { close_and_wait(); }

  void write_line(const std::string& line) {
    if (!out_) throw ConnectionError("channel closed");
    if (std::fputs(line.c_str(), out_) < 0 || std::fflush(out_) != 0)
      throw ConnectionError("write to oracle process failed");
  }

  std::string read_line() {
    if (!in_) throw ConnectionError("channel closed");
    std::string line;
    int c;
    while ((c = std::fgetc(in_)) != EOF) {
      if (c == '\n') return line;
      line.push_back(static_cast<char>(c));
    }
    throw ConnectionError("oracle process closed its output");
  }

  // Closes both pipes and reaps the child. Returns its exit status or -1.
  int close_and_wait() {
    if (out_) {
      std::fclose(out_);
      out_ = nullptr;
    }
    if (in_) {
      std::fclose(in_);
      in_ = nullptr;
    }
    int status = -1;
    if (pid_ > 0) {
      int st = 0;
      if (waitpid(pid_, &st, 0) == pid_ && WIFEXITED(st)) status = WEXITSTATUS(st);
      pid_ = -1;
    }
    return status;
  }

 private:
  pid_t pid_ = -1;
  FILE* out_ = nullptr;
  FILE* in_ = nullptr;
};

// Requests are serialized; at most one batch in flight. Ids start at 1 and
// only increase.
class SubprocessOracle final : public Oracle {
 public:
  explicit SubprocessOracle(const std::string& command) : channel_(command) {}

  // Asks the server to stop without waiting for its reply, then closes the
  // pipes and reaps it.
  ~SubprocessOracle() override {
    try {
      const WireMessage msg{next_id_++, "shutdown", nlohmann::json::object()};
      channel_.write_line(encode_line(msg.to_json()));
    } catch (const Error&) {
    }
  }

  OracleDescriptor meta() override {
    if (!meta_) {
      const WireResponse r = call("meta", nlohmann::json::object());
      meta_ = descriptor_from_json(r.expect_ok(), r.raw);
      meta_->supports_gradients = false;
    }
    return *meta_;
  }

  Vector generate(std::span<const double> z) override {
    const WireResponse r = call("generate", {{"z", Vector(z.begin(), z.end())}});
    return json_vector(r.expect_ok(), r.raw);
  }
  Vector predict_attrs(std::span<const double> x) override {
    const WireResponse r = call("predict_attrs", {{"x", Vector(x.begin(), x.end())}});
    return json_vector(r.expect_ok(), r.raw);
  }
  double predict_target(std::span<const double> x) override {
    const WireResponse r = call("predict_target", {{"x", Vector(x.begin(), x.end())}});
    return json_number(r.expect_ok(), r.raw);
  }
  Vector shift(std::span<const double> z, const DirectionSpec& spec) override {
    const WireResponse r =
        call("shift", {{"z", Vector(z.begin(), z.end())}, {"spec", spec.entries()}});
    return json_vector(r.expect_ok(), r.raw);
  }
  double value(std::span<const double> z, const DirectionSpec& spec, bool bypass_empty) override {
    const WireResponse r = call("value", value_payload(z, spec, bypass_empty));
    return json_number(r.expect_ok(), r.raw);
  }

  std::vector<double> value_batch(const std::vector<ValueQuery>& queries) override {
    std::vector<WireMessage> requests;
    requests.reserve(queries.size());
    for (const ValueQuery& q : queries)
      requests.push_back({next_id_++, "value", value_payload(q.z, q.spec, q.bypass_empty)});
    const auto by_id = batch(requests);
    std::vector<double> out;
    out.reserve(queries.size());
    for (const WireMessage& m : requests) {
      const WireResponse& r = by_id.at(m.id);
      out.push_back(json_number(r.expect_ok(), r.raw));
    }
    return out;
  }

  // Sends the requests as one batch message and matches responses by id.
  std::map<std::int64_t, WireResponse> batch(const std::vector<WireMessage>& requests) {
    check_unique_ids(requests);
    if (requests.empty()) return {};
    nlohmann::json subs = nlohmann::json::array();
    for (const WireMessage& m : requests) subs.push_back(m.to_json());
    const WireResponse outer = call("batch", {{"requests", std::move(subs)}});
    const nlohmann::json& arr = outer.expect_ok();
    if (!arr.is_array()) throw ProtocolError("batch result is not an array", outer.raw);
    std::vector<WireResponse> responses;
    for (const auto& sub : arr) responses.push_back(parse_response(sub, outer.raw));
    return match_responses(requests, responses);
  }

  std::int64_t next_id() const { return next_id_; }

  // Sends one request and returns its validated response envelope.
  WireResponse call(const std::string& op, nlohmann::json payload) {
    const WireMessage msg{next_id_++, op, std::move(payload)};
    channel_.write_line(encode_line(msg.to_json()));
    WireResponse r = parse_response_line(channel_.read_line());
    if (r.id != msg.id)
      throw ProtocolError("response id " + std::to_string(r.id) + " does not match request id " +
                              std::to_string(msg.id),
                          r.raw);
    return r;
  }

 private:
  static nlohmann::json value_payload(std::span<const double> z, const DirectionSpec& spec,
                                      bool bypass_empty) {
    return {{"z", Vector(z.begin(), z.end())},
            {"spec", spec.entries()},
            {"bypass_empty", bypass_empty}};
  }

  LineChannel channel_;
  std::int64_t next_id_ = 1;
  std::optional<OracleDescriptor> meta_;
};

}  // namespace cfshap
