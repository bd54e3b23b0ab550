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

#pragma once

#include <stdexcept>
#include <string>

namespace cfshap {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not chain or match.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the operation's domain (bad sentinel, out of range size).
class DomainError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConstructionError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized artifact.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Value oracle failed while evaluating a coalition.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// Malformed or mismatched wire message. Carries the raw line when available.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, std::string raw = {})
      : Error(raw.empty() ? what : what + " (raw: " + raw + ")"),
        raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// The serving side answered ok=false.
class RemoteError : public Error {
 public:
  using Error::Error;
};

// Transport failure: process could not start, pipe closed, write failed.
class ConnectionError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfshap
