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

#include "mmvit/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "byte_io.hpp"

namespace mmvit {

namespace {

using Kind = CheckpointError::Kind;
constexpr char kMagic[4] = {'M', 'M', 'V', 'C'};

void write_entry(detail::ByteWriter& w, const std::string& name, const Tensor<float>& t) {
  if (name.size() > 0xFFFF) throw ContractError("tensor name too long: " + name);
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.str(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  w.bytes(t.data().data(), t.data().size() * sizeof(float));
}

}  // namespace

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(ckpt.version);
  w.u64(ckpt.fingerprint);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size() + ckpt.state.size()));
  for (const auto& [name, t] : ckpt.params) write_entry(w, name, t);
  for (const auto& [name, t] : ckpt.state) write_entry(w, name, t);
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  Checkpoint out;
  try {
    if (bytes.size() < 4 || std::string(reinterpret_cast<const char*>(bytes.data()), 4) != std::string(kMagic, 4)) {
      throw CheckpointError(Kind::kBadMagic, "not a checkpoint file (missing MMVC magic)");
    }
    r.skip(4);
    out.version = r.u32();
    if (out.version != kCheckpointVersion) {
      throw CheckpointError(Kind::kVersionMismatch, "checkpoint format version " + std::to_string(out.version) +
                                                        " is not supported (expected " +
                                                        std::to_string(kCheckpointVersion) + ")");
    }
    out.fingerprint = r.u64();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint16_t len = r.u16();
      std::string name = r.str(len);
      const std::uint32_t rank = r.u32();
      if (rank > 8) r.fail("tensor '" + name + "' has implausible rank " + std::to_string(rank));
      Shape shape;
      std::uint64_t n = 1;
      for (std::uint32_t d = 0; d < rank; ++d) {
        shape.push_back(r.u32());
        n *= static_cast<std::uint64_t>(shape.back());
      }
      if (n * sizeof(float) > r.remaining()) {
        r.fail("payload of tensor '" + name + "' needs " + std::to_string(n * sizeof(float)) + " bytes, only " +
               std::to_string(r.remaining()) + " remain");
      }
      auto payload = r.take(n * sizeof(float));
      std::vector<float> data(n);
      std::memcpy(data.data(), payload.data(), payload.size());
      Tensor<float> t(std::move(shape), std::move(data));
      auto& dst = name.rfind(kStatePrefix, 0) == 0 ? out.state : out.params;
      if (dst.contains(name)) r.fail("duplicate tensor '" + name + "'");
      dst.add(std::move(name), std::move(t));
    }
    if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes after the last tensor");
  } catch (const FormatError& e) {
    throw CheckpointError(Kind::kCorruptPayload, std::string("corrupt checkpoint payload: ") + e.what());
  }
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError(Kind::kIo, "cannot open '" + tmp + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError(Kind::kIo, "write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(Kind::kIo, "cannot move checkpoint into '" + path.string() + "': " + ec.message());
}

void save_checkpoint(const ParamStore<float>& params, const MMViTConfig& cfg, const std::filesystem::path& path) {
  Checkpoint c;
  c.fingerprint = cfg.fingerprint();
  c.params = params.clone();
  save_checkpoint(c, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(Kind::kIo, "cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void verify_fingerprint(const Checkpoint& ckpt, const MMViTConfig& cfg) {
  const std::uint64_t want = cfg.fingerprint();
  if (ckpt.fingerprint != want) {
    throw CheckpointError(Kind::kFingerprintMismatch,
                          "checkpoint fingerprint " + fingerprint_hex(ckpt.fingerprint) +
                              " does not match configuration fingerprint " + fingerprint_hex(want) +
                              " (use the transfer command to adapt weights across configurations)");
  }
}

}  // namespace mmvit
