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

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "mmvit/checkpoint.hpp"
#include "mmvit/model.hpp"
#include "oracles.hpp"

using namespace mmvit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mmvit_ckpt_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

bool bit_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

Checkpoint sample(const MMViTConfig& cfg) {
  Checkpoint c;
  c.fingerprint = cfg.fingerprint();
  c.params = init_params<float>(cfg, 11);
  std::mt19937_64 rng(12);
  for (auto& [_, t] : c.params)
    for (auto& v : t.mutable_data()) v += static_cast<float>(std::normal_distribution<double>(0, 1)(rng));
  c.params.get("head.bias").mutable_data()[0] = std::numeric_limits<float>::denorm_min();
  c.state.add("state.epoch", Tensor<float>::full({1}, 3.0f));
  return c;
}

void expect_kind(const std::vector<std::uint8_t>& bytes, CheckpointError::Kind kind) {
  try {
    decode_checkpoint(bytes);
    FAIL() << "decode accepted a damaged file";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto cfg = MMViTConfig::tiny();
  const auto c = sample(cfg);
  const auto path = scratch("roundtrip.ckpt");
  save_checkpoint(c, path);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.version, kCheckpointVersion);
  EXPECT_EQ(back.fingerprint, cfg.fingerprint());
  ASSERT_EQ(back.params.size(), c.params.size());
  for (const auto& [name, t] : c.params) EXPECT_TRUE(bit_equal(t, back.params.get(name))) << name;
  ASSERT_TRUE(back.state.contains("state.epoch"));
  EXPECT_EQ(back.state.get("state.epoch").data()[0], 3.0f);
  EXPECT_NO_THROW(verify_fingerprint(back, cfg));
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(c));
}

TEST(Checkpoint, HeaderLayoutIsLittleEndian) {
  Checkpoint c;
  c.fingerprint = 0x0102030405060708ULL;
  c.params.add("w", Tensor<float>(Shape{2}, {1.0f, -2.0f}));
  const auto b = encode_checkpoint(c);
  const std::vector<std::uint8_t> expect = {'M', 'M', 'V', 'C', 1, 0, 0, 0, 8, 7, 6, 5, 4, 3, 2, 1, 1, 0, 0, 0,
                                            1, 0, 'w', 1, 0, 0, 0, 2, 0, 0, 0,
                                            0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
  EXPECT_EQ(b, expect);
}

TEST(Checkpoint, TruncationAndCorruptionAreRejected) {
  const auto bytes = encode_checkpoint(sample(MMViTConfig::tiny()));
  for (std::size_t cut : {std::size_t{5}, std::size_t{17}, std::size_t{30}, bytes.size() / 2, bytes.size() - 1}) {
    expect_kind(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)),
                CheckpointError::Kind::kCorruptPayload);
  }
  auto extra = bytes;
  extra.push_back(0);
  expect_kind(extra, CheckpointError::Kind::kCorruptPayload);
  auto huge = bytes;
  huge[16] = 0xff;  // tensor count
  huge[17] = 0xff;
  expect_kind(huge, CheckpointError::Kind::kCorruptPayload);

  const auto path = scratch("truncated.ckpt");
  {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() - 3));
  }
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(Checkpoint, MagicVersionAndIo) {
  auto bytes = encode_checkpoint(sample(MMViTConfig::tiny()));
  auto bad = bytes;
  bad[0] = 'X';
  expect_kind(bad, CheckpointError::Kind::kBadMagic);
  expect_kind({}, CheckpointError::Kind::kBadMagic);
  auto ver = bytes;
  ver[4] = 2;
  expect_kind(ver, CheckpointError::Kind::kVersionMismatch);
  try {
    load_checkpoint(scratch("does_not_exist.ckpt"));
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::kIo);
  }
}

TEST(Checkpoint, FingerprintMismatchNamesBoth) {
  const auto c = sample(MMViTConfig::tiny());
  const auto other = MMViTConfig::audio();
  try {
    verify_fingerprint(c, other);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::kFingerprintMismatch);
    const std::string msg = e.what();
    EXPECT_NE(msg.find(fingerprint_hex(c.fingerprint)), std::string::npos) << msg;
    EXPECT_NE(msg.find(fingerprint_hex(other.fingerprint())), std::string::npos) << msg;
  }
}

TEST(Checkpoint, FingerprintTracksArchitectureOnly) {
  auto a = MMViTConfig::tiny(), b = a;
  b.dropout = 0.3;
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.embed_dim = 96;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}
