#pragma once

#include "dflow/diffeo.hpp"
#include "dflow/grid.hpp"
#include "dflow/spectral.hpp"

#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace dflow {

/// Named (t, value) series plus free-form metadata, written as CSV `metric,t,value`.
class DiagnosticsReport {
 public:
  struct Sample {
    double t;
    double value;
  };

  /// Appends one sample; values must be finite and time stamps strictly increasing per metric.
  void add(const std::string& metric, double t, double value);
  void set_meta(const std::string& key, std::string value) { meta_[key] = std::move(value); }

  const std::vector<Sample>& series(const std::string& metric) const;
  bool has(const std::string& metric) const { return series_.count(metric) != 0; }
  const std::vector<std::string>& metrics() const { return order_; }
  const std::map<std::string, std::string>& meta() const { return meta_; }

  /// 17 significant digits per value.
  void write_csv(std::ostream& os) const;

 private:
  std::map<std::string, std::vector<Sample>> series_;
  std::vector<std::string> order_;
  std::map<std::string, std::string> meta_;
};

/// Simpson integral over quad_grid of (a0 o phi) det(D phi) - a0 for the backward map of `chain`.
double conservation_error(const MapChain& chain, const ScalarSampler& a0, const Grid& quad_grid);

/// L [1 + log(C1/eps)] ((1 + C2 L)^k - 1) / (L C2); k L [1 + log(C1/eps)] when C2 = 0.
double lemma1_bound(double L, double eps, double C1, double C2, int k);

/// L sum_{i=1..k} (1 + log(C_i/eps)) prod_{j=2..i} (1 + L B_j), the sharper recurrence form.
/// `C` holds C_1..C_k and `B` holds B_2..B_k (B.size() == k - 1).
double lemma1_recurrence(double L, double eps, const std::vector<double>& C, const std::vector<double>& B);

struct BandwidthPoint {
  int k;          // prefix depth
  int measured;   // bw_eps of the composite displacement
  double bound;   // closed form with the measured constants
  double C1;      // max RMS norm of phi_j - id over the prefix
  double C2;      // max sup norm of the suffix compositions phi_j o ... o phi_k - id, j >= 2
};

/// Measures bw_eps of every prefix phi_1 o ... o phi_k by sampling its displacement on a
/// sample_n x sample_n grid, and pairs it with lemma1_bound. The mean displacement is excluded.
std::vector<BandwidthPoint> bandwidth_study(const MapChain& chain, double eps, double L, int sample_n = 1024);

/// Max |pullback on coarse - restriction of pullback on fine| over the coarse vertices.
double resolution_consistency_check(const MapChain& chain, const ScalarSampler& u0, const Grid& coarse,
                                    const Grid& fine);

/// Control path: the fine pullback spectrally resampled onto the coarse grid, against the
/// coarse pullback. Not resolution consistent; reported only.
double resampling_deviation(const MapChain& chain, const ScalarSampler& u0, const Grid& coarse, const Grid& fine);

/// Least-squares slope of log E against log k over shells in [k_min, k_max]; shells with
/// E <= 0 are skipped with a warning.
double spectrum_slope(const std::vector<ShellEnergy>& spectrum, double k_min, double k_max);

/// [k_max^(1/3), k_max^(2/3)] for shells 1..k_max, rounded to integers.
std::pair<int, int> default_slope_range(int k_max);

/// Mean of squared differences over all channels and vertices.
double mse(const PeriodicField& u, const PeriodicField& ref);

struct ExtremaExcess {
  double min_excess;  // max(0, min u0 - min u)
  double max_excess;  // max(0, max u - max u0)
};

ExtremaExcess extrema_error(const PeriodicField& u, const PeriodicField& u0);

}  // namespace dflow
