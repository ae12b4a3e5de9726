#pragma once

#include "dflow/grid.hpp"

#include <complex>
#include <span>
#include <vector>

namespace dflow {

/// Fourier-series coefficients c_k = (1/(nx*ny)) sum_x f(x) exp(-i k.x), stored in FFT order
/// (column i holds k_x = i for i < nx/2 and i - nx otherwise; rows likewise for k_y).
class Spectrum {
 public:
  using Complex = std::complex<double>;
  using Coefficients = Eigen::Array<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Spectrum(const Grid& grid, Coefficients coeffs);
  explicit Spectrum(const Grid& grid);

  const Grid& grid() const { return grid_; }
  const Coefficients& coefficients() const { return coeffs_; }
  Coefficients& coefficients() { return coeffs_; }

  /// Coefficient of wavevector (kx, ky); indices are reduced modulo the grid size.
  Complex at(int kx, int ky) const { return coeffs_(index(ky, grid_.ny()), index(kx, grid_.nx())); }
  Complex& at(int kx, int ky) { return coeffs_(index(ky, grid_.ny()), index(kx, grid_.nx())); }

  /// Signed wavenumber of storage index `i` on an axis of length n, in [-n/2, n/2).
  static int wavenumber(int i, int n) { return i < n / 2 ? i : i - n; }
  static int index(int k, int n) { return ((k % n) + n) % n; }

  /// sum_k |c_k|^2, equal to the mean of |f|^2 over the grid.
  double energy() const;

 private:
  Grid grid_;
  Coefficients coeffs_;
};

Spectrum dft(const Grid& grid, const Plane& values);
Spectrum dft(const PeriodicField& field, int channel = 0);

/// Inverse transform; returns the real part (input spectra of real fields are Hermitian).
Plane idft_plane(const Spectrum& spec);
PeriodicField idft(const Spectrum& spec);

/// Spectral derivative d^ox/dx^ox d^oy/dy^oy of a periodic plane. The Nyquist mode is
/// dropped along any axis differentiated an odd number of times.
Plane spectral_derivative(const Grid& grid, const Plane& values, int ox, int oy);

/// Trigonometric interpolation onto another grid: keeps the modes with |k_x| < min(nx)/2 and
/// |k_y| < min(ny)/2 (Nyquist modes of either grid are dropped).
Plane spectral_resample(const Grid& from, const Plane& values, const Grid& to);

/// Smallest integer R with sum_{|k|_2 >= R} |c_k|^2 <= eps^2.
int effective_bandwidth(const PeriodicField& field, double eps);

/// Same, with the tail energy summed over several spectra (components of a vector field).
int effective_bandwidth(std::span<const Spectrum> spectra, double eps);

struct ShellEnergy {
  int shell;
  double energy;
};

/// Kinetic energy per unit-width wavenumber shell from vorticity,
/// E(n) = 1/2 sum_{n-1/2 <= |k| < n+1/2} |w_k|^2 / |k|^2 for n = 1 .. min(nx,ny)/2 - 1.
std::vector<ShellEnergy> energy_spectrum(const PeriodicField& vorticity);

}  // namespace dflow
