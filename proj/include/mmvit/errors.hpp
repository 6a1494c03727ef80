// Copyright (c) 2026 The MMViT Kit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mmvit {

/// Base class for every error raised by the kit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or kernel/input extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (non-scalar loss, missing grad, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value detected while NaN checking is enabled.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid or infeasible configuration. Maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad input data (too-short waveform, empty dataset). Maps to CLI exit code 1.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Undecodable file. Carries the byte offset at which decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Checkpoint persistence failures.
class CheckpointError : public Error {
 public:
  enum class Kind { kIo, kBadMagic, kVersionMismatch, kCorruptPayload, kFingerprintMismatch };
  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Image-to-audio weight transfer failures.
class TransferError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmvit
