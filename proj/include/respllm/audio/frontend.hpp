#pragma once

#include "respllm/core/matrix.hpp"

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <vector>

namespace respllm::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kClipSamples = 8 * kSampleRate;
inline constexpr int kWindow = 1024;  // 64 ms
inline constexpr int kHop = 512;      // 32 ms
inline constexpr int kFftBins = kWindow / 2 + 1;
inline constexpr int kMels = 64;
inline constexpr double kEnergyFloor = 1e-10;
inline const double kLogFloor = std::log(kEnergyFloor);

inline constexpr int kPaddedFrames = 256;
inline constexpr int kPatchSide = 16;
inline constexpr int kTimeBlocks = kPaddedFrames / kPatchSide;  // 16
inline constexpr int kMelBlocks = kMels / kPatchSide;           // 4
inline constexpr int kPatches = kTimeBlocks * kMelBlocks;       // 64
inline constexpr int kPatchDim = kPatchSide * kPatchSide;       // 256

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
};

// values: [frames x 64] natural-log mel energies, floored at kLogFloor.
struct LogMelSpectrogram {
  Matrix values;
  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index mels() const { return values.cols(); }
};

// patches: [64 x 256]; row p covers time block p / 4 and mel block p % 4,
// flattened time-major within the patch.
struct PatchGrid {
  Matrix patches;
  Eigen::Index n_patches() const { return patches.rows(); }
  Eigen::Index patch_dim() const { return patches.cols(); }
};

// Resample to 16 kHz (linear interpolation), tail-pad with zeros or keep the
// first 8 s, then scale down by the peak when it exceeds 1.
Waveform standardize(const Waveform& w);

// floor((n - window) / hop) + 1, or 0 when n < window.
std::size_t frame_count(std::size_t n, int window = kWindow, int hop = kHop);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
// Center frequencies (Hz) of the 64 triangular filters spanning 0..8 kHz.
std::vector<double> mel_center_frequencies();
// [64 x 513] triangular weights over FFT bins.
const Matrix& mel_filterbank();

LogMelSpectrogram log_mel(const Waveform& w);

PatchGrid patchify(const LogMelSpectrogram& spec);
// Inverse of patchify: the [256 x 64] padded spectrogram.
Matrix reassemble(const PatchGrid& grid);

// Convenience: standardize -> log_mel -> patchify.
PatchGrid waveform_to_patches(const Waveform& w);

// 16-bit PCM mono WAV.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w);
// Round-trips samples through 16-bit quantization exactly as write+read would.
void quantize_pcm16(Waveform& w);

}  // namespace respllm::audio
