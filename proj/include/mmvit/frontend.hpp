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

// Input front-ends: PCM audio to log-mel filterbank "images", image files to
// normalized 3xHxW arrays, and the NTC v1 raw tensor container.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mmvit/tensor.hpp"

namespace mmvit::frontend {

inline constexpr int kSampleRateHz = 16000;
inline constexpr std::int64_t kModelFrames = 1024;
inline constexpr std::int64_t kMelBins = 128;

struct Waveform {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate_hz = kSampleRateHz;
};

/// T x F log-mel energies, row-major (frame-major).
struct Spectrogram {
  std::int64_t frames = 0;
  std::int64_t bins = 0;
  std::vector<float> values;

  float at(std::int64_t t, std::int64_t f) const { return values[static_cast<std::size_t>(t * bins + f)]; }
  float& at(std::int64_t t, std::int64_t f) { return values[static_cast<std::size_t>(t * bins + f)]; }
  /// As a model input of shape [1, T, F].
  Tensor<float> to_tensor() const;
  static Spectrogram from_tensor(const Tensor<float>& t);
};

struct ImageInput {
  Tensor<float> pixels;  // [3, H, W]
  bool normalized = false;
};

struct FbankOptions {
  int sample_rate_hz = kSampleRateHz;
  double window_ms = 25.0;
  double shift_ms = 10.0;
  int n_mels = static_cast<int>(kMelBins);
  double log_floor = 1e-10;

  std::int64_t window_samples() const;
  std::int64_t shift_samples() const;
  /// Smallest power of two holding one window.
  std::int64_t fft_size() const;
};

/// Triangular mel filters (HTK mel scale) spanning 0 Hz to Nyquist.
class MelFilterbank {
 public:
  MelFilterbank(int n_mels, std::int64_t fft_size, int sample_rate_hz);

  int n_mels() const { return n_mels_; }
  std::int64_t n_fft_bins() const { return n_fft_bins_; }
  double weight(int mel, std::int64_t fft_bin) const {
    return weights_[static_cast<std::size_t>(mel * n_fft_bins_ + fft_bin)];
  }
  /// Center frequency of each filter in Hz.
  const std::vector<double>& centers_hz() const { return centers_hz_; }
  /// Applies the bank to a power spectrum of n_fft_bins() values.
  void apply(std::span<const double> power, std::span<double> out) const;

  static double hz_to_mel(double hz);
  static double mel_to_hz(double mel);

 private:
  int n_mels_;
  std::int64_t n_fft_bins_;
  double bin_hz_;
  std::vector<double> weights_;
  std::vector<double> centers_hz_;
};

/// Number of full frames a waveform of `length` samples yields.
std::int64_t frame_count(std::int64_t length, const FbankOptions& opts = {});

/// Hamming-windowed power spectra through the mel bank, then log(energy + floor).
/// Throws InputError when the waveform is shorter than one window.
Spectrogram logmel_fbank(const Waveform& wave, const FbankOptions& opts = {});

/// Zero-pads at the end or center-crops so the result has exactly `target_frames`.
Spectrogram fit_length(const Spectrogram& spec, std::int64_t target_frames);

/// Linear-interpolation resampling.
Waveform resample_linear(const Waveform& wave, int target_rate_hz);

/// RIFF/WAVE PCM16 decoding; stereo is averaged to mono.
Waveform decode_wav(std::span<const std::uint8_t> bytes);
Waveform load_wav(const std::filesystem::path& path);
void save_wav(const std::filesystem::path& path, const Waveform& wave);

/// Decoded image as [3, H, W] in [0, 1] (no resize, no normalization).
Tensor<float> decode_ppm(std::span<const std::uint8_t> bytes);
void save_ppm(const std::filesystem::path& path, const Tensor<float>& rgb01);

/// Loads a PPM (P6) or NTC v1 [3,H,W] image, resizes bilinearly to size x size,
/// scales to [0, 1] and applies per-channel ImageNet mean/std normalization.
ImageInput load_image(const std::filesystem::path& path, std::int64_t size = 224);
/// Resize + normalize step of load_image for already-decoded [3,H,W] data in [0,1].
ImageInput prepare_image(const Tensor<float>& rgb01, std::int64_t size = 224);

// NTC v1: "NTC1", u32 rank, u32 extents[rank], f32 payload, little-endian.
std::vector<std::uint8_t> encode_ntc(const Tensor<float>& t);
Tensor<float> decode_ntc(std::span<const std::uint8_t> bytes);
void save_ntc(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> load_ntc(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace mmvit::frontend
