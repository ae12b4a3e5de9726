#include "dflow/diagnostics.hpp"

#include "dflow/errors.hpp"
#include "dflow/interp.hpp"
#include "dflow/log.hpp"
#include "dflow/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

namespace dflow {

void DiagnosticsReport::add(const std::string& metric, double t, double value) {
  if (!std::isfinite(t) || !std::isfinite(value)) throw InvalidFieldError("diagnostics: non-finite sample in " + metric);
  auto [it, inserted] = series_.try_emplace(metric);
  if (inserted) order_.push_back(metric);
  if (!it->second.empty() && !(t > it->second.back().t)) {
    throw DomainError("diagnostics: time stamps of " + metric + " must increase");
  }
  it->second.push_back({t, value});
}

const std::vector<DiagnosticsReport::Sample>& DiagnosticsReport::series(const std::string& metric) const {
  const auto it = series_.find(metric);
  if (it == series_.end()) throw std::out_of_range("diagnostics: no metric " + metric);
  return it->second;
}

void DiagnosticsReport::write_csv(std::ostream& os) const {
  os << "metric,t,value\n";
  const auto old = os.precision(17);
  for (const auto& name : order_) {
    for (const auto& s : series_.at(name)) os << name << ',' << s.t << ',' << s.value << '\n';
  }
  os.precision(old);
}

double conservation_error(const MapChain& chain, const ScalarSampler& a0, const Grid& quad_grid) {
  PeriodicField f = transport_density(chain, a0, quad_grid);
  f.flat() -= a0(quad_grid.vertices());
  return simpson_integral(f);
}

double lemma1_bound(double L, double eps, double C1, double C2, int k) {
  if (!(eps > 0.0)) throw DomainError("lemma1_bound: eps must be positive");
  if (k < 0) throw DomainError("lemma1_bound: k must be nonnegative");
  const double head = L * (1.0 + std::log(C1 / eps));
  if (C2 == 0.0) return k * head;
  return head * (std::pow(1.0 + C2 * L, k) - 1.0) / (L * C2);
}

double lemma1_recurrence(double L, double eps, const std::vector<double>& C, const std::vector<double>& B) {
  if (!(eps > 0.0)) throw DomainError("lemma1_recurrence: eps must be positive");
  if (!C.empty() && B.size() + 1 != C.size()) throw DomainError("lemma1_recurrence: need k - 1 suffix norms");
  double total = 0.0;
  double prod = 1.0;
  for (std::size_t i = 0; i < C.size(); ++i) {
    if (i > 0) prod *= 1.0 + L * B[i - 1];
    total += (1.0 + std::log(C[i] / eps)) * prod;
  }
  return L * total;
}

namespace {

// Unwrapped displacement of a chain sampled at the vertices of g.
std::array<Plane, 2> chain_displacement(const MapChain& chain, const Grid& g) {
  const Points p = g.vertices();
  const Points q = chain_displace(chain, p) - p;
  std::array<Plane, 2> out;
  for (int c = 0; c < 2; ++c) {
    out[c] = Plane(g.ny(), g.nx());
    out[c].reshaped<Eigen::RowMajor>() = q.row(c).transpose().array();
  }
  return out;
}

}  // namespace

std::vector<BandwidthPoint> bandwidth_study(const MapChain& chain, double eps, double L, int sample_n) {
  if (!(eps > 0.0)) throw DomainError("bandwidth_study: eps must be positive");
  const Grid g(sample_n);
  const std::size_t k = chain.size();
  std::vector<double> rms(k);
  for (std::size_t j = 0; j < k; ++j) {
    const auto d = chain_displacement(chain.slice(j, 1), g);
    rms[j] = std::sqrt((d[0].square() + d[1].square()).mean());
  }
  std::vector<BandwidthPoint> out;
  for (std::size_t depth = 1; depth <= k; ++depth) {
    const auto d = chain_displacement(chain.slice(0, depth), g);
    std::array<Spectrum, 2> spec{dft(g, d[0]), dft(g, d[1])};
    // The mean displacement is a translation and carries no bandwidth.
    for (auto& s : spec) s.at(0, 0) = 0.0;
    BandwidthPoint pt{};
    pt.k = static_cast<int>(depth);
    pt.measured = effective_bandwidth(std::span<const Spectrum>(spec), eps);
    pt.C1 = *std::max_element(rms.begin(), rms.begin() + static_cast<std::ptrdiff_t>(depth));
    pt.C2 = 0.0;
    for (std::size_t j = 1; j < depth; ++j) {
      const auto s = chain_displacement(chain.slice(j, depth - j), g);
      pt.C2 = std::max(pt.C2, (s[0].square() + s[1].square()).sqrt().maxCoeff());
    }
    pt.bound = lemma1_bound(L, eps, pt.C1, pt.C2, pt.k);
    out.push_back(pt);
  }
  return out;
}

double resolution_consistency_check(const MapChain& chain, const ScalarSampler& u0, const Grid& coarse,
                                    const Grid& fine) {
  if (!coarse.nests_in(fine)) throw DomainError("resolution consistency: coarse grid does not nest in fine grid");
  const PeriodicField c = pullback_field(chain, u0, coarse);
  const PeriodicField f = restrict_to(pullback_field(chain, u0, fine), coarse);
  return (c.scalar() - f.scalar()).abs().maxCoeff();
}

double resampling_deviation(const MapChain& chain, const ScalarSampler& u0, const Grid& coarse, const Grid& fine) {
  if (!coarse.nests_in(fine)) throw DomainError("resampling_deviation: coarse grid does not nest in fine grid");
  const PeriodicField c = pullback_field(chain, u0, coarse);
  const PeriodicField f = pullback_field(chain, u0, fine);
  return (c.scalar() - spectral_resample(fine, f.scalar(), coarse)).abs().maxCoeff();
}

double spectrum_slope(const std::vector<ShellEnergy>& spectrum, double k_min, double k_max) {
  if (!(k_min < k_max)) throw DomainError("spectrum_slope: need k_min < k_max");
  std::vector<double> lx, ly;
  int skipped = 0;
  for (const auto& s : spectrum) {
    if (s.shell < k_min || s.shell > k_max) continue;
    if (!(s.energy > 0.0)) {
      ++skipped;
      continue;
    }
    lx.push_back(std::log(static_cast<double>(s.shell)));
    ly.push_back(std::log(s.energy));
  }
  if (skipped > 0) log_warning("spectrum_slope: skipped " + std::to_string(skipped) + " shells with E <= 0");
  if (lx.size() < 2) throw DomainError("spectrum_slope: fewer than two usable shells in range");
  const Eigen::Map<const Eigen::VectorXd> x(lx.data(), static_cast<Eigen::Index>(lx.size()));
  const Eigen::Map<const Eigen::VectorXd> y(ly.data(), static_cast<Eigen::Index>(ly.size()));
  const Eigen::VectorXd xc = x.array() - x.mean();
  const Eigen::VectorXd yc = y.array() - y.mean();
  return xc.dot(yc) / xc.squaredNorm();
}

std::pair<int, int> default_slope_range(int k_max) {
  if (k_max < 2) throw DomainError("default_slope_range: need at least two shells");
  const int lo = std::max(1, static_cast<int>(std::lround(std::cbrt(static_cast<double>(k_max)))));
  const int hi = std::max(lo + 1, static_cast<int>(std::lround(std::pow(static_cast<double>(k_max), 2.0 / 3.0))));
  return {lo, std::min(hi, k_max)};
}

double mse(const PeriodicField& u, const PeriodicField& ref) {
  if (!(u.grid() == ref.grid()) || u.channels() != ref.channels()) throw DomainError("mse: field shapes differ");
  double total = 0.0;
  for (int c = 0; c < u.channels(); ++c) {
    const Eigen::ArrayXd sq = (u.channel(c) - ref.channel(c)).square().reshaped();
    total += pairwise_sum(sq.data(), static_cast<std::size_t>(sq.size()));
  }
  return total / (static_cast<double>(u.grid().size()) * u.channels());
}

ExtremaExcess extrema_error(const PeriodicField& u, const PeriodicField& u0) {
  return {std::max(0.0, u0.min() - u.min()), std::max(0.0, u.max() - u0.max())};
}

}  // namespace dflow
