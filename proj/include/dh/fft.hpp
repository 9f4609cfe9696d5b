#pragma once

#include <complex>
#include <cstddef>
#include <mutex>
#include <vector>

#include "dh/grid.hpp"

namespace dh {

using cplx = std::complex<double>;

/// FFTW planning is not thread-safe; every plan creation and destruction takes this lock.
std::mutex& fftw_planner_lock();

/// Real-to-complex transforms of one periodic spatial slice (n^d points, side L),
/// plus the derivative symbols on the half spectrum. First-derivative symbols have
/// the Nyquist wavenumber set to zero so that the discrete gradient is real and
/// exactly antisymmetric.
class SpatialFFT {
public:
    SpatialFFT(int d, int n, double L);
    ~SpatialFFT();
    SpatialFFT(const SpatialFFT&) = delete;
    SpatialFFT& operator=(const SpatialFFT&) = delete;

    int dim() const { return d_; }
    int n() const { return n_; }
    double length() const { return L_; }
    std::size_t real_size() const { return real_size_; }
    std::size_t spectral_size() const { return spec_size_; }

    /// Unnormalized forward transform; safe to call concurrently on distinct buffers.
    void forward(const double* in, cplx* out) const;
    /// Normalized inverse transform. Destroys `in`.
    void backward(cplx* in, double* out) const;

    /// Derivative symbol kappa_j at each half-spectrum index.
    const std::vector<double>& kappa(int j) const { return kappa_[static_cast<std::size_t>(j)]; }
    /// Sum of squared derivative symbols.
    const std::vector<double>& kappa_sq() const { return kappa_sq_; }
    /// True where every wavenumber component is 0 or Nyquist (kernel of the discrete gradient).
    const std::vector<unsigned char>& null_mode() const { return null_; }
    /// Multiplicity of each half-spectrum entry in the full spectrum (1 or 2).
    const std::vector<double>& parseval_weight() const { return weight_; }
    /// Integer wavenumber (signed) of component j at a half-spectrum index.
    long mode(std::size_t idx, int j) const;

private:
    int d_;
    int n_;
    double L_;
    std::size_t real_size_;
    std::size_t spec_size_;
    void* plan_fwd_;
    void* plan_bwd_;
    std::vector<std::vector<double>> kappa_;
    std::vector<double> kappa_sq_;
    std::vector<unsigned char> null_;
    std::vector<double> weight_;
};

/// In-place complex DFTs of length n along the slowest axis of an [n][howmany] array.
class StridedFFT {
public:
    StridedFFT(int n, std::size_t howmany);
    ~StridedFFT();
    StridedFFT(const StridedFFT&) = delete;
    StridedFFT& operator=(const StridedFFT&) = delete;
    void forward(cplx* data) const;
    /// Unnormalized inverse.
    void backward(cplx* data) const;

private:
    void* plan_fwd_;
    void* plan_bwd_;
};

}  // namespace dh
