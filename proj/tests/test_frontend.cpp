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

#include <cmath>
#include <cstring>
#include <filesystem>

#include "mmvit/frontend.hpp"

using namespace mmvit;
using namespace mmvit::frontend;

namespace {

constexpr double kPi = 3.14159265358979323846;

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Canonical 44-byte-header PCM16 WAV, samples interleaved.
std::vector<std::uint8_t> pcm16_wav(const std::vector<std::int16_t>& samples, int channels, int rate) {
  std::vector<std::uint8_t> b;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  for (char c : std::string("RIFF")) b.push_back(static_cast<std::uint8_t>(c));
  put32(b, 36 + data_bytes);
  for (char c : std::string("WAVEfmt ")) b.push_back(static_cast<std::uint8_t>(c));
  put32(b, 16);
  put16(b, 1);
  put16(b, static_cast<std::uint16_t>(channels));
  put32(b, static_cast<std::uint32_t>(rate));
  put32(b, static_cast<std::uint32_t>(rate * channels * 2));
  put16(b, static_cast<std::uint16_t>(channels * 2));
  put16(b, 16);
  for (char c : std::string("data")) b.push_back(static_cast<std::uint8_t>(c));
  put32(b, data_bytes);
  for (auto s : samples) put16(b, static_cast<std::uint16_t>(s));
  return b;
}

Waveform tone(double hz, double seconds, int rate = kSampleRateHz) {
  Waveform w;
  w.sample_rate_hz = rate;
  const auto n = static_cast<std::size_t>(seconds * rate);
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(static_cast<float>(0.5 * std::sin(2 * kPi * hz * i / rate)));
  return w;
}

Spectrogram ramp_spec(std::int64_t frames, std::int64_t bins) {
  Spectrogram s;
  s.frames = frames;
  s.bins = bins;
  for (std::int64_t i = 0; i < frames * bins; ++i) s.values.push_back(static_cast<float>(i / bins + 1));
  return s;
}

}  // namespace

TEST(Fbank, TenSecondsGive998Frames) {
  EXPECT_EQ(frame_count(160000), (160000 - 400) / 160 + 1);
  EXPECT_EQ(frame_count(160000), 998);
  Waveform w;
  w.samples.assign(160000, 0.0f);
  const auto s = logmel_fbank(w);
  EXPECT_EQ(s.frames, 998);
  EXPECT_EQ(s.bins, 128);
}

TEST(Fbank, SilenceIsLogFloor) {
  Waveform w;
  w.samples.assign(16000, 0.0f);
  const auto s = logmel_fbank(w);
  const float expected = static_cast<float>(std::log(FbankOptions{}.log_floor));
  for (float v : s.values) ASSERT_EQ(v, expected);
}

TEST(Fbank, TooShortIsInputError) {
  Waveform w;
  w.samples.assign(100, 0.0f);
  EXPECT_THROW(logmel_fbank(w), InputError);
}

TEST(Fbank, PureToneLandsOnNearestFilter) {
  const auto s = logmel_fbank(tone(1000.0, 1.0));
  const auto& centers = MelFilterbank(128, FbankOptions{}.fft_size(), kSampleRateHz).centers_hz();
  int nearest = 0;
  for (int m = 0; m < 128; ++m) {
    if (std::abs(centers[m] - 1000.0) < std::abs(centers[nearest] - 1000.0)) nearest = m;
  }
  for (std::int64_t t = 0; t < s.frames; ++t) {
    int arg = 0;
    for (int m = 1; m < 128; ++m) {
      if (s.at(t, m) > s.at(t, arg)) arg = m;
    }
    ASSERT_EQ(arg, nearest) << "frame " << t;
  }
}

TEST(Fbank, Deterministic) {
  const auto a = logmel_fbank(tone(440.0, 0.5)), b = logmel_fbank(tone(440.0, 0.5));
  EXPECT_EQ(a.values, b.values);
}

TEST(Fbank, MelScaleRoundTrip) {
  for (double hz : {0.0, 100.0, 1000.0, 7999.0}) {
    EXPECT_NEAR(MelFilterbank::mel_to_hz(MelFilterbank::hz_to_mel(hz)), hz, 1e-9);
  }
  EXPECT_NEAR(MelFilterbank::hz_to_mel(700.0), 1127.0 * std::log(2.0), 1e-9);
}

TEST(FitLength, PadsWithTrailingZeros) {
  const auto out = fit_length(ramp_spec(998, 4), 1024);
  ASSERT_EQ(out.frames, 1024);
  for (std::int64_t t = 0; t < 998; ++t) ASSERT_EQ(out.at(t, 0), static_cast<float>(t + 1));
  for (std::int64_t t = 998; t < 1024; ++t)
    for (int f = 0; f < 4; ++f) ASSERT_EQ(out.at(t, f), 0.0f);
}

TEST(FitLength, IdentityAndCenterCrop) {
  const auto same = ramp_spec(1024, 2);
  EXPECT_EQ(fit_length(same, 1024).values, same.values);
  const auto crop = fit_length(ramp_spec(1100, 2), 1024);
  EXPECT_EQ(crop.at(0, 0), 39.0f);  // frame 38
  EXPECT_EQ(crop.at(1023, 1), 1062.0f);  // frame 1061
}

TEST(Wav, Pcm16ScalingEndpoints) {
  const auto w = decode_wav(pcm16_wav({-32768, 0, 16384}, 1, 16000));
  ASSERT_EQ(w.samples.size(), 3u);
  EXPECT_EQ(w.samples[0], -1.0f);
  EXPECT_EQ(w.samples[1], 0.0f);
  EXPECT_EQ(w.samples[2], 0.5f);
  EXPECT_EQ(w.sample_rate_hz, 16000);
}

TEST(Wav, StereoOppositeChannelsAverageToSilence) {
  std::vector<std::int16_t> s;
  for (int i = 0; i < 50; ++i) {
    const auto v = static_cast<std::int16_t>((i * 977) % 20000 - 10000);
    s.push_back(v);
    s.push_back(static_cast<std::int16_t>(-v));
  }
  for (float v : decode_wav(pcm16_wav(s, 2, 16000)).samples) ASSERT_EQ(v, 0.0f);
}

TEST(Wav, TruncatedReportsOffset) {
  auto bytes = pcm16_wav({1, 2, 3, 4}, 1, 16000);
  bytes.resize(20);
  try {
    decode_wav(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_GT(e.offset(), 0u);
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
}

TEST(Wav, SaveLoadRoundTripAndResample) {
  const auto path = std::filesystem::temp_directory_path() / "mmvit_test_tone.wav";
  Waveform w = tone(200.0, 0.25, 8000);
  save_wav(path, w);
  const auto back = load_wav(path);
  ASSERT_EQ(back.samples.size(), w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) ASSERT_NEAR(back.samples[i], w.samples[i], 1.0 / 32768 + 1e-6);
  const auto up = resample_linear(back, 16000);
  EXPECT_EQ(up.sample_rate_hz, 16000);
  EXPECT_NEAR(static_cast<double>(up.samples.size()), 2.0 * w.samples.size(), 2.0);
  std::filesystem::remove(path);
}

TEST(Image, PpmIdentityResizeAndNormalization) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> px(0, 255);
  std::vector<float> v(3 * 224 * 224);
  for (auto& x : v) x = static_cast<float>(px(rng)) / 255.0f;
  Tensor<float> rgb(Shape{3, 224, 224}, v);
  const auto path = std::filesystem::temp_directory_path() / "mmvit_test.ppm";
  save_ppm(path, rgb);
  const auto decoded = decode_ppm(read_file(path));
  for (std::size_t i = 0; i < v.size(); ++i) ASSERT_NEAR(decoded.data()[i], v[i], 1e-6);
  const auto a = load_image(path), b = prepare_image(rgb);
  EXPECT_TRUE(a.normalized);
  EXPECT_EQ(a.pixels.shape(), (Shape{3, 224, 224}));
  for (std::size_t i = 0; i < v.size(); ++i) ASSERT_NEAR(a.pixels.data()[i], b.pixels.data()[i], 1e-5);
  std::filesystem::remove(path);
  EXPECT_THROW(prepare_image(Tensor<float>::zeros({1, 8, 8})), ConfigError);
}

TEST(Ntc, RoundTripAndCorruption) {
  Tensor<float> t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  auto bytes = encode_ntc(t);
  const auto back = decode_ntc(bytes);
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_TRUE(std::equal(back.data().begin(), back.data().end(), t.data().begin()));
  bytes.pop_back();
  EXPECT_THROW(decode_ntc(bytes), FormatError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_ntc(bytes), FormatError);
}
