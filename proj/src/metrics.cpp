#include "smol/metrics.hpp"

#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>

#include "smol/types.hpp"

namespace smol {

FitQuality sse_tss_r2(const Eigen::VectorXd& data, const Eigen::VectorXd& fit) {
  if (data.size() != fit.size() || data.size() < 2)
    throw std::invalid_argument("sse_tss_r2: need equal lengths >= 2");
  FitQuality q;
  q.sse = (data - fit).squaredNorm();
  const double mean = data.mean();
  q.tss = (data.array() - mean).matrix().squaredNorm();
  if (q.tss > 0.0) q.r2 = 1.0 - q.sse / q.tss;
  return q;
}

double mae(const Eigen::VectorXd& measured, const Eigen::VectorXd& truth) {
  if (measured.size() != truth.size() || measured.size() == 0)
    throw std::invalid_argument("mae: need matching non-empty inputs");
  return (measured - truth).cwiseAbs().mean();
}

double mae_diff(const Eigen::VectorXd& measured, const Eigen::VectorXd& truth,
                double reference_mean) {
  if (measured.size() != truth.size() || measured.size() == 0)
    throw std::invalid_argument("mae_diff: need matching non-empty inputs");
  return (measured.array() - (truth.array() + reference_mean)).abs().mean();
}

double stddev(const std::vector<Eigen::VectorXd>& datasets) {
  Eigen::Index total = 0;
  for (const auto& d : datasets) total += d.size();
  if (total < 2) throw std::invalid_argument("stddev: need at least 2 values in total");
  double acc = 0.0;
  for (const auto& d : datasets) {
    const double mean = d.mean();
    acc += (d.array() - mean).matrix().squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(total - 1));
}

std::optional<double> circ_mean(const Eigen::VectorXd& angles) {
  std::complex<double> resultant(0.0, 0.0);
  for (Eigen::Index i = 0; i < angles.size(); ++i)
    resultant += std::polar(1.0, angles(i));
  if (std::abs(resultant) < 1e-12 * std::max<double>(1, angles.size())) return std::nullopt;
  return std::arg(resultant);
}

double circ_std(const std::vector<Eigen::VectorXd>& datasets) {
  std::complex<double> resultant(0.0, 0.0);
  Eigen::Index total = 0;
  for (const auto& d : datasets) {
    const auto mean = circ_mean(d);
    if (!mean) throw std::invalid_argument("circ_std: dataset with undefined circular mean");
    for (Eigen::Index i = 0; i < d.size(); ++i)
      resultant += std::polar(1.0, *mean - d(i));
    total += d.size();
  }
  if (total == 0) throw std::invalid_argument("circ_std: empty input");
  const double rbar = std::min(1.0, std::abs(resultant) / static_cast<double>(total));
  return std::sqrt(-2.0 * std::log(std::max(rbar, 1e-300)));
}

double circ_mae_diff(const Eigen::VectorXd& measured, const Eigen::VectorXd& truth,
                     double reference_mean) {
  if (measured.size() != truth.size() || measured.size() == 0)
    throw std::invalid_argument("circ_mae_diff: need matching non-empty inputs");
  std::complex<double> resultant(0.0, 0.0);
  for (Eigen::Index i = 0; i < measured.size(); ++i) {
    const double diff = std::abs(wrap_angle(measured(i) - (truth(i) + reference_mean)));
    resultant += std::polar(1.0, diff);
  }
  return std::arg(resultant);
}

std::string AccuracyReport::to_csv() const {
  std::ostringstream out;
  out << "axis,mae,sigma,trend_r2,points,repeats\n";
  out.precision(12);
  for (const auto& r : rows)
    out << r.axis << ',' << r.mae << ',' << r.sigma << ',' << r.trend_r2 << ',' << r.points << ','
        << r.repeats << '\n';
  return out.str();
}

std::string AccuracyReport::to_json() const {
  std::ostringstream out;
  out.precision(12);
  out << "{\"sigma_xyz\":" << sigma_xyz << ",\"rows\":[";
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << (i ? "," : "") << "{\"axis\":\"" << r.axis << "\",\"mae\":" << r.mae
        << ",\"sigma\":" << r.sigma << ",\"trend_r2\":" << r.trend_r2 << ",\"points\":" << r.points
        << ",\"repeats\":" << r.repeats << "}";
  }
  out << "]}";
  return out.str();
}

}  // namespace smol
