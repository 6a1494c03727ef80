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

#include "mmvit/frontend.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <mutex>
#include <numbers>

#include "byte_io.hpp"

namespace mmvit::frontend {

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::int64_t n) : n_(n) {
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  // |X_k|^2 for k in [0, n/2].
  void power(std::span<double> out) {
    fftw_execute(plan_);
    for (std::int64_t k = 0; k <= n_ / 2; ++k) {
      out[static_cast<std::size_t>(k)] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    }
  }

 private:
  std::int64_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

const float kImageMean[3] = {0.485f, 0.456f, 0.406f};
const float kImageStd[3] = {0.229f, 0.224f, 0.225f};

}  // namespace

Tensor<float> Spectrogram::to_tensor() const { return Tensor<float>(Shape{1, frames, bins}, values); }

Spectrogram Spectrogram::from_tensor(const Tensor<float>& t) {
  if (!(t.rank() == 2 || (t.rank() == 3 && t.dim(0) == 1))) {
    throw DimensionError("spectrogram tensor must be [T,F] or [1,T,F], got " + shape_str(t.shape()));
  }
  Spectrogram s;
  s.frames = t.dim(-2);
  s.bins = t.dim(-1);
  s.values.assign(t.data().begin(), t.data().end());
  return s;
}

std::int64_t FbankOptions::window_samples() const {
  return static_cast<std::int64_t>(std::llround(sample_rate_hz * window_ms / 1000.0));
}

std::int64_t FbankOptions::shift_samples() const {
  return static_cast<std::int64_t>(std::llround(sample_rate_hz * shift_ms / 1000.0));
}

std::int64_t FbankOptions::fft_size() const {
  std::int64_t n = 1;
  while (n < window_samples()) n <<= 1;
  return n;
}

double MelFilterbank::hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double MelFilterbank::mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

MelFilterbank::MelFilterbank(int n_mels, std::int64_t fft_size, int sample_rate_hz)
    : n_mels_(n_mels), n_fft_bins_(fft_size / 2 + 1), bin_hz_(static_cast<double>(sample_rate_hz) / fft_size) {
  if (n_mels < 1 || fft_size < 2 || sample_rate_hz <= 0) throw ConfigError("invalid mel filterbank geometry");
  const double mel_hi = hz_to_mel(sample_rate_hz / 2.0);
  const double step = mel_hi / (n_mels + 1);
  weights_.assign(static_cast<std::size_t>(n_mels) * static_cast<std::size_t>(n_fft_bins_), 0.0);
  centers_hz_.resize(static_cast<std::size_t>(n_mels));
  for (int m = 0; m < n_mels; ++m) {
    const double left = step * m, center = step * (m + 1), right = step * (m + 2);
    centers_hz_[static_cast<std::size_t>(m)] = mel_to_hz(center);
    for (std::int64_t k = 0; k < n_fft_bins_; ++k) {
      const double mel = hz_to_mel(bin_hz_ * static_cast<double>(k));
      double w = 0.0;
      if (mel > left && mel <= center) {
        w = (mel - left) / (center - left);
      } else if (mel > center && mel < right) {
        w = (right - mel) / (right - center);
      }
      weights_[static_cast<std::size_t>(m * n_fft_bins_ + k)] = w;
    }
  }
}

void MelFilterbank::apply(std::span<const double> power, std::span<double> out) const {
  for (int m = 0; m < n_mels_; ++m) {
    const double* w = weights_.data() + static_cast<std::size_t>(m) * static_cast<std::size_t>(n_fft_bins_);
    double e = 0.0;
    for (std::int64_t k = 0; k < n_fft_bins_; ++k) e += w[k] * power[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(m)] = e;
  }
}

std::int64_t frame_count(std::int64_t length, const FbankOptions& opts) {
  const std::int64_t win = opts.window_samples();
  if (length < win) return 0;
  return (length - win) / opts.shift_samples() + 1;
}

Spectrogram logmel_fbank(const Waveform& wave, const FbankOptions& opts) {
  if (wave.sample_rate_hz != opts.sample_rate_hz) {
    return logmel_fbank(resample_linear(wave, opts.sample_rate_hz), opts);
  }
  const std::int64_t win = opts.window_samples();
  const std::int64_t hop = opts.shift_samples();
  const std::int64_t len = static_cast<std::int64_t>(wave.samples.size());
  if (len < win) {
    throw InputError("waveform of " + std::to_string(len) + " samples is shorter than one " +
                     std::to_string(win) + "-sample analysis window");
  }
  const std::int64_t n_fft = opts.fft_size();
  const MelFilterbank bank(opts.n_mels, n_fft, opts.sample_rate_hz);
  std::vector<double> window(static_cast<std::size_t>(win));
  for (std::int64_t i = 0; i < win; ++i) {
    window[static_cast<std::size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win - 1));
  }

  Spectrogram spec;
  spec.frames = frame_count(len, opts);
  spec.bins = opts.n_mels;
  spec.values.resize(static_cast<std::size_t>(spec.frames * spec.bins));
  RealFft fft(n_fft);
  std::vector<double> power(static_cast<std::size_t>(n_fft / 2 + 1));
  std::vector<double> mel(static_cast<std::size_t>(opts.n_mels));
  for (std::int64_t t = 0; t < spec.frames; ++t) {
    double* in = fft.input();
    std::fill(in, in + n_fft, 0.0);
    for (std::int64_t i = 0; i < win; ++i) {
      in[i] = static_cast<double>(wave.samples[static_cast<std::size_t>(t * hop + i)]) * window[static_cast<std::size_t>(i)];
    }
    fft.power(power);
    bank.apply(power, mel);
    for (int m = 0; m < opts.n_mels; ++m) {
      spec.at(t, m) = static_cast<float>(std::log(mel[static_cast<std::size_t>(m)] + opts.log_floor));
    }
  }
  return spec;
}

Spectrogram fit_length(const Spectrogram& spec, std::int64_t target_frames) {
  if (target_frames <= 0) throw ContractError("fit_length: target frame count must be positive");
  Spectrogram out;
  out.frames = target_frames;
  out.bins = spec.bins;
  out.values.assign(static_cast<std::size_t>(target_frames * spec.bins), 0.0f);
  if (spec.frames <= target_frames) {
    std::copy(spec.values.begin(), spec.values.end(), out.values.begin());
  } else {
    const std::int64_t start = (spec.frames - target_frames) / 2;
    std::copy_n(spec.values.begin() + start * spec.bins, target_frames * spec.bins, out.values.begin());
  }
  return out;
}

Waveform resample_linear(const Waveform& wave, int target_rate_hz) {
  if (target_rate_hz <= 0 || wave.sample_rate_hz <= 0) throw InputError("sample rates must be positive");
  if (wave.sample_rate_hz == target_rate_hz || wave.samples.empty()) {
    Waveform w = wave;
    w.sample_rate_hz = target_rate_hz;
    return w;
  }
  const double ratio = static_cast<double>(wave.sample_rate_hz) / target_rate_hz;
  const auto n_in = static_cast<std::int64_t>(wave.samples.size());
  const auto n_out = static_cast<std::int64_t>(std::floor((n_in - 1) / ratio)) + 1;
  Waveform out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (std::int64_t i = 0; i < n_out; ++i) {
    const double pos = i * ratio;
    const auto i0 = std::min<std::int64_t>(static_cast<std::int64_t>(pos), n_in - 1);
    const auto i1 = std::min<std::int64_t>(i0 + 1, n_in - 1);
    const double f = pos - static_cast<double>(i0);
    out.samples[static_cast<std::size_t>(i)] = static_cast<float>(
        (1.0 - f) * wave.samples[static_cast<std::size_t>(i0)] + f * wave.samples[static_cast<std::size_t>(i1)]);
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

namespace {

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("short write to " + path.string());
}

}  // namespace

Waveform decode_wav(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "WAV");
  if (r.str(4) != "RIFF") r.fail("missing RIFF tag");
  r.u32();
  if (r.str(4) != "WAVE") r.fail("missing WAVE tag");
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (r.remaining() > 0) {
    const std::size_t chunk_at = r.pos();
    const std::string id = r.str(4);
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      if (size < 16) r.fail("fmt chunk too small");
      const std::uint16_t format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();
      r.u16();
      bits = r.u16();
      if (format != 1) throw FormatError("WAV: unsupported format tag " + std::to_string(format) + " (PCM only)", chunk_at + 8);
      if (bits != 16) throw FormatError("WAV: unsupported bit depth " + std::to_string(bits) + " (PCM16 only)", chunk_at + 22);
      if (channels < 1 || channels > 2) throw FormatError("WAV: unsupported channel count " + std::to_string(channels), chunk_at + 10);
      if (rate == 0) throw FormatError("WAV: zero sample rate", chunk_at + 12);
      r.skip(size - 16 + (size & 1u));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("WAV: data chunk before fmt chunk", chunk_at);
      const std::size_t data_at = r.pos();
      if (r.remaining() < size) {
        throw FormatError("WAV: data chunk declares " + std::to_string(size) + " bytes but only " +
                              std::to_string(r.remaining()) + " remain",
                          data_at);
      }
      const std::size_t frame_bytes = 2u * channels;
      if (size % frame_bytes != 0) throw FormatError("WAV: data size is not a whole number of frames", data_at);
      auto payload = r.take(size);
      Waveform w;
      w.sample_rate_hz = static_cast<int>(rate);
      const std::size_t n = size / frame_bytes;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < channels; ++c) {
          std::int16_t v;
          std::memcpy(&v, payload.data() + (i * channels + c) * 2, 2);
          acc += static_cast<float>(v) / 32768.0f;
        }
        w.samples[i] = acc / static_cast<float>(channels);
      }
      return w;
    } else {
      if (r.remaining() < size) throw FormatError("WAV: chunk '" + id + "' overruns the file", chunk_at);
      r.skip(size + (size & 1u));
    }
  }
  throw FormatError("WAV: no data chunk", r.pos());
}

Waveform load_wav(const std::filesystem::path& path) { return decode_wav(read_file(path)); }

void save_wav(const std::filesystem::path& path, const Waveform& wave) {
  detail::ByteWriter w;
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  w.str("RIFF");
  w.u32(36 + 2 * n);
  w.str("WAVE");
  w.str("fmt ");
  w.u32(16);
  w.u16(1);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(wave.sample_rate_hz));
  w.u32(static_cast<std::uint32_t>(wave.sample_rate_hz) * 2);
  w.u16(2);
  w.u16(16);
  w.str("data");
  w.u32(2 * n);
  for (float s : wave.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(std::lround(c * 32768.0f), -32768L, 32767L))));
  }
  write_file(path, w.buffer());
}

Tensor<float> decode_ppm(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "PPM");
  if (r.str(2) != "P6") r.fail("missing P6 magic");
  auto token = [&]() -> long {
    // Whitespace and '#' comments may separate header fields.
    for (;;) {
      if (r.remaining() == 0) r.fail("truncated header");
      const std::size_t at = r.pos();
      const std::uint8_t c = r.u8();
      if (std::isspace(c)) continue;
      if (c == '#') {
        while (r.remaining() > 0 && r.u8() != '\n') {
        }
        continue;
      }
      if (!std::isdigit(c)) throw FormatError("PPM: unexpected header byte", at);
      long v = c - '0';
      while (r.remaining() > 0) {
        const std::uint8_t d = r.u8();
        if (std::isdigit(d)) {
          v = v * 10 + (d - '0');
          if (v > 1 << 20) throw FormatError("PPM: header value too large", at);
        } else if (std::isspace(d)) {
          return v;
        } else {
          throw FormatError("PPM: unexpected header byte", r.pos() - 1);
        }
      }
      r.fail("truncated header");
    }
  };
  const long width = token();
  const long height = token();
  const std::size_t maxval_at = r.pos();
  const long maxval = token();
  if (width <= 0 || height <= 0) throw FormatError("PPM: non-positive dimensions", maxval_at);
  if (maxval <= 0 || maxval > 255) throw FormatError("PPM: only 8-bit maxval is supported", maxval_at);
  const auto pixels = r.take(static_cast<std::size_t>(width * height * 3));
  std::vector<float> chw(pixels.size());
  const auto plane = static_cast<std::size_t>(width * height);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) chw[c * plane + i] = static_cast<float>(pixels[i * 3 + c]) / static_cast<float>(maxval);
  }
  return Tensor<float>(Shape{3, height, width}, std::move(chw));
}

void save_ppm(const std::filesystem::path& path, const Tensor<float>& rgb01) {
  if (rgb01.rank() != 3 || rgb01.dim(0) != 3) throw DimensionError("save_ppm expects [3,H,W], got " + shape_str(rgb01.shape()));
  const std::int64_t h = rgb01.dim(1), w = rgb01.dim(2);
  detail::ByteWriter out;
  out.str("P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n");
  const auto d = rgb01.data();
  for (std::int64_t i = 0; i < h * w; ++i) {
    for (std::int64_t c = 0; c < 3; ++c) {
      const float v = std::clamp(d[static_cast<std::size_t>(c * h * w + i)], 0.0f, 1.0f);
      out.u8(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    }
  }
  write_file(path, out.buffer());
}

ImageInput prepare_image(const Tensor<float>& rgb01, std::int64_t size) {
  if (rgb01.rank() != 3 || rgb01.dim(0) != 3) {
    throw ConfigError("image input must have 3 channels, got shape " + shape_str(rgb01.shape()));
  }
  Tensor<float> resized = (rgb01.dim(1) == size && rgb01.dim(2) == size) ? rgb01.detach()
                                                                         : interp_bilinear_2d(rgb01, size, size).detach();
  auto d = resized.mutable_data();
  const auto plane = static_cast<std::size_t>(size * size);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) d[c * plane + i] = (d[c * plane + i] - kImageMean[c]) / kImageStd[c];
  }
  return ImageInput{std::move(resized), true};
}

ImageInput load_image(const std::filesystem::path& path, std::int64_t size) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return prepare_image(decode_ppm(bytes), size);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "NTC1", 4) == 0) return prepare_image(decode_ntc(bytes), size);
  throw FormatError("unsupported image format in " + path.string() + " (expected PPM P6 or NTC1)", 0);
}

std::vector<std::uint8_t> encode_ntc(const Tensor<float>& t) {
  detail::ByteWriter w;
  w.str("NTC1");
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
  w.bytes(t.data().data(), t.data().size() * sizeof(float));
  return std::move(w.buffer());
}

Tensor<float> decode_ntc(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "NTC");
  if (r.str(4) != "NTC1") throw FormatError("NTC: bad magic", 0);
  const std::uint32_t rank = r.u32();
  if (rank == 0 || rank > 8) throw FormatError("NTC: unsupported rank " + std::to_string(rank), 4);
  Shape shape;
  std::uint64_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::size_t at = r.pos();
    const std::uint32_t e = r.u32();
    if (e == 0) throw FormatError("NTC: zero extent", at);
    n *= e;
    if (n > (std::uint64_t{1} << 32)) throw FormatError("NTC: payload too large", at);
    shape.push_back(e);
  }
  const std::size_t at = r.pos();
  if (r.remaining() != n * sizeof(float)) {
    throw FormatError("NTC: payload holds " + std::to_string(r.remaining()) + " bytes, expected " +
                          std::to_string(n * sizeof(float)),
                      at);
  }
  std::vector<float> data(static_cast<std::size_t>(n));
  std::memcpy(data.data(), r.take(data.size() * sizeof(float)).data(), data.size() * sizeof(float));
  return Tensor<float>(std::move(shape), std::move(data));
}

void save_ntc(const std::filesystem::path& path, const Tensor<float>& t) { write_file(path, encode_ntc(t)); }

Tensor<float> load_ntc(const std::filesystem::path& path) { return decode_ntc(read_file(path)); }

}  // namespace mmvit::frontend
