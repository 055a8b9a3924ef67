#include "respllm/audio/frontend.hpp"


#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace respllm::audio {

Waveform standardize(const Waveform& w) {
  if (w.samples.empty()) throw InputError("standardize: empty waveform");
  if (w.sample_rate <= 0)
    throw InputError("standardize: invalid sample rate " + std::to_string(w.sample_rate));

  std::vector<double> resampled;
  if (w.sample_rate == kSampleRate) {
    resampled.assign(w.samples.begin(),
                     w.samples.begin() + static_cast<std::ptrdiff_t>(
                                             std::min(w.samples.size(), kClipSamples)));
  } else {
    const double ratio = static_cast<double>(w.sample_rate) / kSampleRate;
    const auto n_out = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(w.samples.size()) / ratio)));
    resampled.resize(std::min(n_out, kClipSamples));
    const std::size_t last = w.samples.size() - 1;
    for (std::size_t i = 0; i < resampled.size(); ++i) {
      const double t = static_cast<double>(i) * ratio;
      const auto i0 = std::min(static_cast<std::size_t>(t), last);
      const std::size_t i1 = std::min(i0 + 1, last);
      const double frac = t - static_cast<double>(i0);
      resampled[i] = w.samples[i0] * (1.0 - frac) + w.samples[i1] * frac;
    }
  }
  resampled.resize(kClipSamples, 0.0);

  double peak = 0.0;
  for (double s : resampled) peak = std::max(peak, std::abs(s));
  if (peak > 1.0)
    for (double& s : resampled) s /= peak;
  return Waveform{std::move(resampled), kSampleRate};
}

std::size_t frame_count(std::size_t n, int window, int hop) {
  if (window <= 0 || hop <= 0) throw ConfigError("frame_count: window and hop must be positive");
  const auto win = static_cast<std::size_t>(window);
  if (n < win) return 0;
  return (n - win) / static_cast<std::size_t>(hop) + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_edges_hz() {
  const double top = hz_to_mel(kSampleRate / 2.0);
  std::vector<double> edges(kMels + 2);
  for (int i = 0; i < kMels + 2; ++i) edges[i] = mel_to_hz(top * i / (kMels + 1));
  return edges;
}

std::vector<double> periodic_hann() {
  std::vector<double> w(kWindow);
  for (int i = 0; i < kWindow; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / kWindow);
  return w;
}

}  // namespace

std::vector<double> mel_center_frequencies() {
  std::vector<double> edges = mel_edges_hz();
  return {edges.begin() + 1, edges.end() - 1};
}

const Matrix& mel_filterbank() {
  static const Matrix bank = [] {
    const std::vector<double> edges = mel_edges_hz();
    Matrix fb = Matrix::Zero(kMels, kFftBins);
    for (int m = 0; m < kMels; ++m) {
      const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
      for (int k = 0; k < kFftBins; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kWindow;
        const double wt = std::min((f - lo) / (c - lo), (hi - f) / (hi - c));
        if (wt > 0.0) fb(m, k) = wt;
      }
    }
    return fb;
  }();
  return bank;
}

namespace {
// FFTW planning is not thread-safe; execution is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

LogMelSpectrogram log_mel(const Waveform& w) {
  if (w.sample_rate != kSampleRate)
    throw InputError("log_mel: expected 16 kHz input, got " + std::to_string(w.sample_rate));
  const std::size_t frames = frame_count(w.samples.size());
  if (frames == 0) throw InputError("log_mel: waveform shorter than one window");

  static const std::vector<double> hann = periodic_hann();
  const Matrix& fb = mel_filterbank();

  const int n_frames = static_cast<int>(frames);
  double* in = fftw_alloc_real(frames * kWindow);
  fftw_complex* spec = fftw_alloc_complex(frames * kFftBins);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    int n = kWindow;
    plan = fftw_plan_many_dft_r2c(1, &n, n_frames, in, nullptr, 1, kWindow, spec, nullptr, 1,
                                  kFftBins, FFTW_ESTIMATE);
  }
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = w.samples.data() + t * kHop;
    double* dst = in + t * kWindow;
    for (int i = 0; i < kWindow; ++i) dst[i] = src[i] * hann[static_cast<std::size_t>(i)];
  }
  fftw_execute(plan);
  Matrix power(n_frames, kFftBins);
  for (std::size_t i = 0; i < frames * kFftBins; ++i)
    power.data()[i] = spec[i][0] * spec[i][0] + spec[i][1] * spec[i][1];
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(spec);
  fftw_free(in);

  LogMelSpectrogram out;
  out.values.noalias() = power * fb.transpose();
  out.values = out.values.array().max(kEnergyFloor).log().matrix();
  return out;
}

PatchGrid patchify(const LogMelSpectrogram& spec) {
  if (spec.mels() != kMels)
    throw InputError("patchify: expected 64 mel bins, got " + std::to_string(spec.mels()));
  if (spec.frames() > kPaddedFrames)
    throw InputError("patchify: " + std::to_string(spec.frames()) + " frames exceed " +
                     std::to_string(kPaddedFrames));
  Matrix padded = Matrix::Constant(kPaddedFrames, kMels, kLogFloor);
  padded.topRows(spec.frames()) = spec.values;

  PatchGrid grid;
  grid.patches.resize(kPatches, kPatchDim);
  for (int tb = 0; tb < kTimeBlocks; ++tb)
    for (int mb = 0; mb < kMelBlocks; ++mb) {
      const int p = tb * kMelBlocks + mb;
      for (int dt = 0; dt < kPatchSide; ++dt)
        for (int dm = 0; dm < kPatchSide; ++dm)
          grid.patches(p, dt * kPatchSide + dm) =
              padded(tb * kPatchSide + dt, mb * kPatchSide + dm);
    }
  return grid;
}

Matrix reassemble(const PatchGrid& grid) {
  if (grid.n_patches() != kPatches || grid.patch_dim() != kPatchDim)
    throw DimensionError("reassemble: expected [64x256] patches, got " + shape_str(grid.patches));
  Matrix padded(kPaddedFrames, kMels);
  for (int tb = 0; tb < kTimeBlocks; ++tb)
    for (int mb = 0; mb < kMelBlocks; ++mb) {
      const int p = tb * kMelBlocks + mb;
      for (int dt = 0; dt < kPatchSide; ++dt)
        for (int dm = 0; dm < kPatchSide; ++dm)
          padded(tb * kPatchSide + dt, mb * kPatchSide + dm) =
              grid.patches(p, dt * kPatchSide + dm);
    }
  return padded;
}

PatchGrid waveform_to_patches(const Waveform& w) { return patchify(log_mel(standardize(w))); }

}  // namespace respllm::audio
