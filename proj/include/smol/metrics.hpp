#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace smol {

struct FitQuality {
  double sse = 0.0;
  double tss = 0.0;
  std::optional<double> r2;  // empty for constant data (TSS = 0)
};

/// SSE, TSS about the data mean, and R^2 = 1 - SSE/TSS.
FitQuality sse_tss_r2(const Eigen::VectorXd& data, const Eigen::VectorXd& fit);

/// Mean absolute error over pooled datasets.
double mae(const Eigen::VectorXd& measured, const Eigen::VectorXd& truth);

/// Differential MAE: the reference-dataset mean is added to the truth before
/// the error is taken, removing the unknown absolute offset.
double mae_diff(const Eigen::VectorXd& measured, const Eigen::VectorXd& truth,
                double reference_mean);

/// Pooled standard deviation over datasets, each about its own mean.
double stddev(const std::vector<Eigen::VectorXd>& datasets);

/// Circular mean (resultant-vector argument) of angles in radians.
/// A vanishing resultant (uniform angles) leaves the mean undefined.
std::optional<double> circ_mean(const Eigen::VectorXd& angles);

/// Circular standard deviation sqrt(-2 ln Rbar) with the resultant length
/// normalized by the sample count; datasets are centered on their own
/// circular means before pooling.
double circ_std(const std::vector<Eigen::VectorXd>& datasets);

/// Differential circular MAE: wrapped absolute deviations combined by
/// resultant vector.
double circ_mae_diff(const Eigen::VectorXd& measured, const Eigen::VectorXd& truth,
                     double reference_mean);

// Per-axis summary of an accuracy campaign.
struct AxisAccuracy {
  std::string axis;
  double mae = 0.0;       // differential MAE (mm for translations, deg for rotations)
  double sigma = 0.0;     // pooled standard deviation
  double trend_r2 = 0.0;  // R^2 of measured-vs-truth
  int points = 0;
  int repeats = 0;
};

struct AccuracyReport {
  std::vector<AxisAccuracy> rows;
  double sigma_xyz = 0.0;  // mean spatial sigma over x, y, z [mm]

  std::string to_csv() const;
  std::string to_json() const;
};

}  // namespace smol
