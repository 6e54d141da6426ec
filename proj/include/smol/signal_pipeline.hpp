#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "smol/types.hpp"

namespace smol {

struct NoiseTone {
  double frequency;  // [Hz]
  double amplitude;  // [T]
};

struct RecordedTrace {
  double sample_rate = 0.0;
  Eigen::VectorXd values;  // [T]
};

// Synthetic stand-in for the recorded lab noise: a common-mode mains trace
// (fundamental plus harmonics) whose coupling varies per sensor by the
// gradient factors, plus independent white noise per channel. The whole
// common trace gets one randomized time shift per injection.
struct NoiseModel {
  double mains_frequency = 50.0;  // [Hz]
  double mains_amplitude = 0.0;   // [T]
  std::vector<NoiseTone> harmonics;
  double white_sigma = 0.0;  // [T]
  std::vector<double> gradient_factors;  // per channel, |g| < 0.2
  std::optional<RecordedTrace> recorded;
  std::uint64_t seed = 0;

  NoiseModel with_seed(std::uint64_t s) const {
    NoiseModel copy = *this;
    copy.seed = s;
    return copy;
  }

  void validate(int n_channels) const;
};

/// channel_i += (1 + g_i) * common_trace(t + shift) + white noise.
/// Deterministic for a given seed; zero-amplitude models return the input.
SignalFrame inject_noise(const SignalFrame& frame, const NoiseModel& nm);

/// Clip to the per-sensor range and round to the quantization step.
SignalFrame saturate_quantize(const SignalFrame& frame, const SensorArray& array);

/// channel_i <- channel_i - channel_ref(direction of i); reference channels
/// are dropped, leaving the measurement sensors in array order.
SignalFrame spatial_difference(const SignalFrame& frame, const SensorArray& array);

/// Centered moving mean (shrink-to-valid at the edges), `passes` times.
/// Even windows span [k - w/2, k + w/2 - 1].
SignalFrame moving_mean(const SignalFrame& frame, int window = 50, int passes = 2);

/// Discrete time derivative: interior samples use the central difference,
/// endpoints one-sided differences. Units become T/s.
SignalFrame central_difference(const SignalFrame& frame);

struct FilterConfig {
  int window = 50;
  int passes = 2;
};

/// The full measurement chain: spatial difference, moving means, derivative.
SignalFrame filter_chain(const SignalFrame& frame, const SensorArray& array,
                         const FilterConfig& cfg = {});

/// Group delay (in samples of one frame) the moving-mean chain introduces;
/// non-zero only for even windows.
inline double filter_chain_delay_samples(const FilterConfig& cfg) {
  return (cfg.window % 2 == 0) ? 0.5 * cfg.passes : 0.0;
}

/// |DFT| amplitude of one channel at frequency f (rectangular window),
/// normalized so a pure sine of amplitude A reports about A.
double dft_amplitude(const SignalFrame& frame, Eigen::Index channel, double f);

/// Peak |DFT| of one channel over the bin grid within +-1 Hz of f.
double dft_peak_amplitude(const SignalFrame& frame, Eigen::Index channel, double f);

/// Peak |DFT| within +-1 Hz of f_signal over peak within +-1 Hz of f_noise,
/// measured on the channel with the strongest f_signal peak.
double dft_snr(const SignalFrame& frame, double f_signal, double f_noise = 50.0);

struct PhaseAnchor {
  double phi = 0.0;          // oscillation phase consistent with the anchor [rad]
  double anchor_time = 0.0;  // time of a deflection extremum [s]
};

struct AnchorOptions {
  FilterConfig chain;                     // the chain the frame went through
  double eta = 0.0;                       // damping of the source, for bias correction
  DampingLaw law = DampingLaw::Linear;
  double search_start = 0.0;              // ignore the frame before this time [s]
};

/// Locates the half-period grid of the oscillation from a filtered frame.
/// Deflection extrema appear as simultaneous zero crossings of every
/// derivative channel; the first few crossings of the strongest channel are
/// fitted to the known half-period spacing. The returned phi is the
/// convention theta(anchor) = +theta_max * D(anchor); the true phase may
/// differ by pi, which only the model can resolve.
PhaseAnchor estimate_phase_anchor(const SignalFrame& frame, double f_res,
                                  const AnchorOptions& opts = {});

// Solver-ready observations: n = 4N+1 equidistant samples per channel
// spanning N half periods from the anchor, endpoints inclusive.
struct SampledObservations {
  Eigen::VectorXd timestamps;  // [s], strictly increasing, equidistant
  Eigen::MatrixXd values;      // rows = samples, cols = channels
  int half_periods = 0;        // N
  double anchor_time = 0.0;    // [s]

  Eigen::Index n_samples() const { return values.rows(); }
  Eigen::Index n_channels() const { return values.cols(); }
};

SampledObservations downsample_half_periods(const SignalFrame& frame, double f_res, int N,
                                            double anchor);

/// Consecutive non-overlapping segments of N_seg half periods each, each
/// down-sampled; as many as fit in the frame after the anchor.
std::vector<SampledObservations> segment_signal(const SignalFrame& frame, double f_res, int N_seg,
                                                double anchor);

}  // namespace smol
