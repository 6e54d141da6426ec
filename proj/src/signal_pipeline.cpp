#include "smol/signal_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace smol {

void NoiseModel::validate(int n_channels) const {
  if (mains_amplitude < 0.0 || white_sigma < 0.0)
    throw ConfigError("NoiseModel: amplitudes must be >= 0");
  for (const auto& h : harmonics)
    if (h.amplitude < 0.0) throw ConfigError("NoiseModel: harmonic amplitude must be >= 0");
  if (!gradient_factors.empty() && static_cast<int>(gradient_factors.size()) != n_channels)
    throw ConfigError("NoiseModel: gradient factor count does not match channel count");
  for (double g : gradient_factors)
    if (std::abs(g) >= 0.2) throw ConfigError("NoiseModel: |gradient factor| must be < 0.2");
}

SignalFrame inject_noise(const SignalFrame& frame, const NoiseModel& nm) {
  if (frame.units != SignalUnits::Tesla)
    throw ConfigError("inject_noise: frame must carry raw tesla units");
  nm.validate(static_cast<int>(frame.n_channels()));

  SignalFrame out = frame;
  const Eigen::Index n = frame.n_samples();
  const Eigen::Index n_ch = frame.n_channels();

  std::mt19937_64 rng(nm.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // One randomized time shift for the whole common-mode trace.
  const double shift = unit(rng) / nm.mains_frequency;

  Eigen::VectorXd common = Eigen::VectorXd::Zero(n);
  if (nm.mains_amplitude > 0.0 || !nm.harmonics.empty() || nm.recorded) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = frame.time_at(k) + shift;
      double v = nm.mains_amplitude * std::sin(2.0 * kPi * nm.mains_frequency * t);
      for (const auto& h : nm.harmonics) v += h.amplitude * std::sin(2.0 * kPi * h.frequency * t);
      common(k) = v;
    }
    if (nm.recorded) {
      const RecordedTrace& tr = *nm.recorded;
      if (tr.sample_rate <= 0.0) throw ConfigError("inject_noise: recorded trace without sample rate");
      const double span_needed = (static_cast<double>(n - 1)) / frame.sample_rate + shift;
      if (static_cast<double>(tr.values.size() - 1) / tr.sample_rate < span_needed)
        throw ConfigError("inject_noise: recorded trace shorter than the frame");
      for (Eigen::Index k = 0; k < n; ++k) {
        const double x = (static_cast<double>(k) / frame.sample_rate + shift) * tr.sample_rate;
        const auto i = static_cast<Eigen::Index>(std::floor(x));
        const double w = x - static_cast<double>(i);
        common(k) += (1.0 - w) * tr.values(i) + w * tr.values(std::min(i + 1, tr.values.size() - 1));
      }
    }
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index c = 0; c < n_ch; ++c) {
    const double g = nm.gradient_factors.empty() ? 0.0 : nm.gradient_factors[c];
    for (Eigen::Index k = 0; k < n; ++k) {
      double v = (1.0 + g) * common(k);
      if (nm.white_sigma > 0.0) v += nm.white_sigma * gauss(rng);
      out.samples(k, c) += v;
    }
  }
  return out;
}

SignalFrame saturate_quantize(const SignalFrame& frame, const SensorArray& array) {
  if (frame.units != SignalUnits::Tesla)
    throw ConfigError("saturate_quantize: frame must carry raw tesla units");
  if (frame.n_channels() != array.size())
    throw ConfigError("saturate_quantize: channel count does not match the array");
  SignalFrame out = frame;
  for (Eigen::Index c = 0; c < frame.n_channels(); ++c) {
    const double range = array.sensors[c].range;
    const double step = array.sensors[c].quantization;
    for (Eigen::Index k = 0; k < frame.n_samples(); ++k) {
      double v = std::clamp(out.samples(k, c), -range, range);
      if (step > 0.0) v = std::round(v / step) * step;
      out.samples(k, c) = v;
    }
  }
  return out;
}

SignalFrame spatial_difference(const SignalFrame& frame, const SensorArray& array) {
  if (frame.n_channels() != array.size())
    throw ConfigError("spatial_difference: channel count does not match the array");
  const std::vector<int> keep = array.measurement_indices();
  SignalFrame out;
  out.start_time = frame.start_time;
  out.sample_rate = frame.sample_rate;
  out.units = frame.units;
  out.samples.resize(frame.n_samples(), static_cast<Eigen::Index>(keep.size()));
  for (size_t j = 0; j < keep.size(); ++j) {
    const int i = keep[j];
    const int r = array.reference_for(i);
    out.samples.col(static_cast<Eigen::Index>(j)) = frame.samples.col(i) - frame.samples.col(r);
  }
  return out;
}

namespace {

void moving_mean_pass(Eigen::MatrixXd& data, int window) {
  const Eigen::Index n = data.rows();
  const Eigen::Index left = window / 2;            // even windows span [k - w/2, k + w/2 - 1]
  const Eigen::Index right = (window - 1) / 2;
  Eigen::VectorXd prefix(n + 1);
  Eigen::VectorXd col(n);
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    prefix(0) = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) prefix(k + 1) = prefix(k) + data(k, c);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index lo = std::max<Eigen::Index>(0, k - left);
      const Eigen::Index hi = std::min<Eigen::Index>(n - 1, k + right);
      col(k) = (prefix(hi + 1) - prefix(lo)) / static_cast<double>(hi - lo + 1);
    }
    data.col(c) = col;
  }
}

}  // namespace

SignalFrame moving_mean(const SignalFrame& frame, int window, int passes) {
  if (window < 1) throw ConfigError("moving_mean: window must be >= 1");
  if (window > frame.n_samples())
    throw ConfigError("moving_mean: window longer than the channel");
  SignalFrame out = frame;
  for (int p = 0; p < passes; ++p) moving_mean_pass(out.samples, window);
  return out;
}

SignalFrame central_difference(const SignalFrame& frame) {
  const Eigen::Index n = frame.n_samples();
  if (n < 3) throw ConfigError("central_difference: need at least 3 samples");
  SignalFrame out = frame;
  out.units = SignalUnits::TeslaPerSecond;
  const double rate = frame.sample_rate;
  for (Eigen::Index c = 0; c < frame.n_channels(); ++c) {
    out.samples(0, c) = (frame.samples(1, c) - frame.samples(0, c)) * rate;
    for (Eigen::Index k = 1; k + 1 < n; ++k)
      out.samples(k, c) = (frame.samples(k + 1, c) - frame.samples(k - 1, c)) * rate * 0.5;
    out.samples(n - 1, c) = (frame.samples(n - 1, c) - frame.samples(n - 2, c)) * rate;
  }
  return out;
}

SignalFrame filter_chain(const SignalFrame& frame, const SensorArray& array,
                         const FilterConfig& cfg) {
  return central_difference(moving_mean(spatial_difference(frame, array), cfg.window, cfg.passes));
}

double dft_amplitude(const SignalFrame& frame, Eigen::Index channel, double f) {
  const Eigen::Index n = frame.n_samples();
  const double w = 2.0 * kPi * f / frame.sample_rate;
  double re = 0.0, im = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double v = frame.samples(k, channel);
    re += v * std::cos(w * static_cast<double>(k));
    im -= v * std::sin(w * static_cast<double>(k));
  }
  return 2.0 * std::hypot(re, im) / static_cast<double>(n);
}

double dft_peak_amplitude(const SignalFrame& frame, Eigen::Index channel, double f) {
  const double df = frame.sample_rate / static_cast<double>(frame.n_samples());
  const double lo = std::max(df, f - 1.0);
  const double hi = f + 1.0;
  double best = 0.0;
  for (double fb = std::ceil(lo / df) * df; fb <= hi + 1e-12; fb += df)
    best = std::max(best, dft_amplitude(frame, channel, fb));
  // The exact target frequency need not sit on a bin.
  best = std::max(best, dft_amplitude(frame, channel, f));
  return best;
}

double dft_snr(const SignalFrame& frame, double f_signal, double f_noise) {
  const double min_f = std::min(f_signal, f_noise);
  if (frame.n_samples() < 5.0 * frame.sample_rate / min_f)
    throw ConfigError("dft_snr: frame shorter than 5 periods of the lower frequency");
  Eigen::Index best_ch = 0;
  double best = -1.0;
  for (Eigen::Index c = 0; c < frame.n_channels(); ++c) {
    const double a = dft_peak_amplitude(frame, c, f_signal);
    if (a > best) {
      best = a;
      best_ch = c;
    }
  }
  const double noise = dft_peak_amplitude(frame, best_ch, f_noise);
  return best / noise;
}

PhaseAnchor estimate_phase_anchor(const SignalFrame& frame, double f_res,
                                  const AnchorOptions& opts) {
  const double rate = frame.sample_rate;
  const double half_period = 0.5 / f_res;
  const Eigen::Index n = frame.n_samples();

  // Skip filter edge distortion and any caller-excluded lead-in.
  const double edge = (opts.chain.passes * opts.chain.window + 2) / rate;
  Eigen::Index k0 = static_cast<Eigen::Index>(
      std::ceil((std::max(opts.search_start, frame.start_time) + edge - frame.start_time) * rate));
  k0 = std::max<Eigen::Index>(k0, 1);
  if (k0 >= n - 2) throw NoSignalError("estimate_phase_anchor: frame too short");

  // Strongest channel over the first few periods of the search window.
  const Eigen::Index probe_end =
      std::min<Eigen::Index>(n, k0 + static_cast<Eigen::Index>(3.0 / f_res * rate));
  Eigen::Index ch = 0;
  double amp = 0.0;
  for (Eigen::Index c = 0; c < frame.n_channels(); ++c) {
    const double a = frame.samples.col(c).segment(k0, probe_end - k0).cwiseAbs().maxCoeff();
    if (a > amp) {
      amp = a;
      ch = c;
    }
  }
  if (!(amp > 0.0)) throw NoSignalError("estimate_phase_anchor: no oscillation found (flat signal)");

  // Zero crossings of the derivative channel mark deflection extrema. Use a
  // threshold arming scheme so noise wiggles around zero register once.
  const double threshold = 0.25 * amp;
  std::vector<double> crossings;
  bool armed = frame.samples(k0, ch) > threshold || frame.samples(k0, ch) < -threshold;
  const Eigen::Index search_end =
      std::min<Eigen::Index>(n - 1, k0 + static_cast<Eigen::Index>(12.0 * half_period * rate));
  for (Eigen::Index k = k0; k < search_end && crossings.size() < 16; ++k) {
    const double a = frame.samples(k, ch), b = frame.samples(k + 1, ch);
    if (!armed) {
      if (std::abs(a) > threshold) armed = true;
      continue;
    }
    if ((a > 0.0 && b <= 0.0) || (a < 0.0 && b >= 0.0)) {
      const double w = a / (a - b);
      crossings.push_back(frame.time_at(k) + w / rate);
      armed = false;
    }
  }
  if (crossings.empty())
    throw NoSignalError("estimate_phase_anchor: no oscillation extremum found");

  // Keep the subsequence consistent with the half-period grid, then fit the
  // grid origin by least squares. Channel-specific stationary points of the
  // field produce off-grid crossings; trying several chain starts skips them.
  const double delay = filter_chain_delay_samples(opts.chain) / rate;
  double best_t0 = crossings.front();
  int best_count = 0;
  double best_rms = 1e300;
  for (size_t s = 0; s < std::min<size_t>(3, crossings.size()); ++s) {
    std::vector<double> kept{crossings[s]};
    double expect = crossings[s] + half_period;
    for (size_t i = s + 1; i < crossings.size(); ++i) {
      if (std::abs(crossings[i] - expect) < 0.2 * half_period) {
        kept.push_back(crossings[i]);
        expect = crossings[i] + half_period;
      } else if (crossings[i] > expect + 0.3 * half_period) {
        // allow a missed crossing
        const double steps = std::round((crossings[i] - kept.back()) / half_period);
        if (steps >= 1.0 && std::abs(crossings[i] - (kept.back() + steps * half_period)) <
                                0.2 * half_period) {
          kept.push_back(crossings[i]);
          expect = crossings[i] + half_period;
        }
      }
    }
    double sum = 0.0;
    for (double t : kept) sum += t - std::round((t - kept.front()) / half_period) * half_period;
    const double t0 = sum / static_cast<double>(kept.size());
    double rms = 0.0;
    for (double t : kept) {
      const double d = t - (t0 + std::round((t - t0) / half_period) * half_period);
      rms += d * d;
    }
    rms = std::sqrt(rms / static_cast<double>(kept.size()));
    if (static_cast<int>(kept.size()) > best_count ||
        (static_cast<int>(kept.size()) == best_count && rms < best_rms)) {
      best_count = static_cast<int>(kept.size());
      best_rms = rms;
      best_t0 = t0;
    }
  }

  // Remove the moving-mean group delay and the damping-induced extremum
  // shift: crossings sit where tan(psi) = D'/(omega D), not exactly on the
  // grid.
  double t0 = best_t0 - delay;
  const double omega = 2.0 * kPi * f_res;
  if (opts.eta > 0.0) {
    double ratio;
    if (opts.law == DampingLaw::Exponential) {
      ratio = -opts.eta / omega;
    } else {
      const double d = std::max(1.0 - opts.eta * t0, 1e-6);
      ratio = -opts.eta / d / omega;
    }
    t0 -= std::atan(ratio) / omega;
  }

  PhaseAnchor anchor;
  anchor.anchor_time = t0;
  anchor.phi = wrap_angle(-omega * t0);
  return anchor;
}

SampledObservations downsample_half_periods(const SignalFrame& frame, double f_res, int N,
                                            double anchor) {
  if (N < 1) throw ConfigError("downsample_half_periods: N must be >= 1");
  const double span = N / (2.0 * f_res);
  if (anchor < frame.start_time - 1e-12 || anchor + span > frame.end_time() + 1e-12)
    throw ConfigError("downsample_half_periods: frame does not span N half periods after anchor");
  const int n_pts = 4 * N + 1;
  SampledObservations obs;
  obs.half_periods = N;
  obs.anchor_time = anchor;
  obs.timestamps.resize(n_pts);
  obs.values.resize(n_pts, frame.n_channels());
  const double step = 1.0 / (8.0 * f_res);
  for (int i = 0; i < n_pts; ++i) {
    const double t = anchor + i * step;
    obs.timestamps(i) = t;
    for (Eigen::Index c = 0; c < frame.n_channels(); ++c)
      obs.values(i, c) = frame.value_at(std::min(t, frame.end_time()), c);
  }
  return obs;
}

std::vector<SampledObservations> segment_signal(const SignalFrame& frame, double f_res, int N_seg,
                                                double anchor) {
  if (N_seg < 1) throw ConfigError("segment_signal: N_seg must be >= 1");
  std::vector<SampledObservations> out;
  const double span = N_seg / (2.0 * f_res);
  double t = anchor;
  while (t + span <= frame.end_time() + 1e-12) {
    out.push_back(downsample_half_periods(frame, f_res, N_seg, t));
    t += span;
  }
  return out;
}

}  // namespace smol
