#include "dflow/spectral.hpp"

#include "dflow/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace dflow {

namespace {

// FFTW's planner is not re-entrant; plans are created once per shape under a lock and
// then executed concurrently through the new-array interface.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int nx, int ny, int sign) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(nx, ny, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    const std::size_t n = static_cast<std::size_t>(nx) * ny;
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    fftw_plan plan = fftw_plan_dft_2d(ny, nx, in, out, sign, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n) : data(fftw_alloc_complex(n)) {}
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* data;
};

}  // namespace

Spectrum::Spectrum(const Grid& grid, Coefficients coeffs) : grid_(grid), coeffs_(std::move(coeffs)) {
  if (coeffs_.rows() != grid.ny() || coeffs_.cols() != grid.nx()) {
    throw InvalidFieldError("spectrum shape does not match grid");
  }
}

Spectrum::Spectrum(const Grid& grid) : grid_(grid), coeffs_(Coefficients::Zero(grid.ny(), grid.nx())) {}

double Spectrum::energy() const {
  Eigen::ArrayXd sq = coeffs_.abs2().reshaped();
  return pairwise_sum(sq.data(), static_cast<std::size_t>(sq.size()));
}

Spectrum dft(const Grid& grid, const Plane& values) {
  if (!values.allFinite()) throw InvalidFieldError("dft: field contains non-finite values");
  const std::size_t n = grid.size();
  FftwBuffer in(n), out(n);
  for (std::size_t k = 0; k < n; ++k) {
    in.data[k][0] = values.data()[k];
    in.data[k][1] = 0.0;
  }
  fftw_execute_dft(PlanCache::instance().get(grid.nx(), grid.ny(), FFTW_FORWARD), in.data, out.data);
  Spectrum::Coefficients c(grid.ny(), grid.nx());
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) c.data()[k] = {out.data[k][0] * scale, out.data[k][1] * scale};
  return {grid, std::move(c)};
}

Spectrum dft(const PeriodicField& field, int channel) {
  return dft(field.grid(), field.channel(channel));
}

Plane idft_plane(const Spectrum& spec) {
  const Grid& grid = spec.grid();
  const std::size_t n = grid.size();
  FftwBuffer in(n), out(n);
  const auto& c = spec.coefficients();
  for (std::size_t k = 0; k < n; ++k) {
    in.data[k][0] = c.data()[k].real();
    in.data[k][1] = c.data()[k].imag();
  }
  fftw_execute_dft(PlanCache::instance().get(grid.nx(), grid.ny(), FFTW_BACKWARD), in.data, out.data);
  Plane p(grid.ny(), grid.nx());
  for (std::size_t k = 0; k < n; ++k) p.data()[k] = out.data[k][0];
  return p;
}

PeriodicField idft(const Spectrum& spec) {
  std::vector<Plane> planes;
  planes.push_back(idft_plane(spec));
  return {spec.grid(), std::move(planes)};
}

Plane spectral_derivative(const Grid& grid, const Plane& values, int ox, int oy) {
  if (ox == 0 && oy == 0) return values;
  Spectrum s = dft(grid, values);
  auto& c = s.coefficients();
  const Spectrum::Complex I(0.0, 1.0);
  for (int r = 0; r < grid.ny(); ++r) {
    const int ky = Spectrum::wavenumber(r, grid.ny());
    const bool drop_y = (oy % 2 == 1) && ky == -grid.ny() / 2;
    for (int q = 0; q < grid.nx(); ++q) {
      const int kx = Spectrum::wavenumber(q, grid.nx());
      const bool drop_x = (ox % 2 == 1) && kx == -grid.nx() / 2;
      if (drop_x || drop_y) {
        c(r, q) = 0.0;
        continue;
      }
      c(r, q) *= std::pow(I * double(kx), ox) * std::pow(I * double(ky), oy);
    }
  }
  return idft_plane(s);
}

Plane spectral_resample(const Grid& from, const Plane& values, const Grid& to) {
  if (from == to) return values;
  const Spectrum src = dft(from, values);
  Spectrum dst(to);
  const int hx = std::min(from.nx(), to.nx()) / 2;
  const int hy = std::min(from.ny(), to.ny()) / 2;
  for (int ky = -hy + 1; ky < hy; ++ky) {
    for (int kx = -hx + 1; kx < hx; ++kx) dst.at(kx, ky) = src.at(kx, ky);
  }
  return idft_plane(dst);
}

int effective_bandwidth(std::span<const Spectrum> spectra, double eps) {
  if (!(eps > 0.0)) throw DomainError("effective_bandwidth: eps must be positive");
  if (spectra.empty()) return 0;
  const Grid& grid = spectra.front().grid();
  const int hx = grid.nx() / 2;
  const int hy = grid.ny() / 2;
  const int max_k2 = hx * hx + hy * hy;
  std::vector<double> by_k2(static_cast<std::size_t>(max_k2) + 1, 0.0);
  for (const auto& s : spectra) {
    const auto& c = s.coefficients();
    for (int r = 0; r < grid.ny(); ++r) {
      const int ky = Spectrum::wavenumber(r, grid.ny());
      for (int q = 0; q < grid.nx(); ++q) {
        const int kx = Spectrum::wavenumber(q, grid.nx());
        by_k2[kx * kx + ky * ky] += std::norm(c(r, q));
      }
    }
  }
  // tail[m] = energy with |k|^2 >= m
  std::vector<double> tail(by_k2.size() + 1, 0.0);
  for (int m = max_k2; m >= 0; --m) tail[m] = tail[m + 1] + by_k2[m];
  const double budget = eps * eps;
  for (int R = 0;; ++R) {
    const long r2 = static_cast<long>(R) * R;
    const double t = r2 > max_k2 ? 0.0 : tail[r2];
    if (t <= budget) return R;
  }
}

int effective_bandwidth(const PeriodicField& field, double eps) {
  field.require_scalar("effective_bandwidth");
  if (!(eps > 0.0)) throw DomainError("effective_bandwidth: eps must be positive");
  const Spectrum s = dft(field);
  return effective_bandwidth(std::span<const Spectrum>(&s, 1), eps);
}

std::vector<ShellEnergy> energy_spectrum(const PeriodicField& vorticity) {
  vorticity.require_scalar("energy_spectrum");
  const Grid& grid = vorticity.grid();
  const Spectrum s = dft(vorticity);
  const int shells = std::min(grid.nx(), grid.ny()) / 2 - 1;
  std::vector<ShellEnergy> out;
  for (int n = 1; n <= shells; ++n) out.push_back({n, 0.0});
  const auto& c = s.coefficients();
  for (int r = 0; r < grid.ny(); ++r) {
    const int ky = Spectrum::wavenumber(r, grid.ny());
    for (int q = 0; q < grid.nx(); ++q) {
      const int kx = Spectrum::wavenumber(q, grid.nx());
      const int k2 = kx * kx + ky * ky;
      if (k2 == 0) continue;
      // n - 1/2 <= |k| < n + 1/2  <=>  n = floor(|k| + 1/2)
      const int n = static_cast<int>(std::floor(std::sqrt(static_cast<double>(k2)) + 0.5));
      if (n < 1 || n > shells) continue;
      out[n - 1].energy += 0.5 * std::norm(c(r, q)) / k2;
    }
  }
  return out;
}

}  // namespace dflow
