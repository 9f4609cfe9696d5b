#include "dh/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <numbers>

namespace dh {

std::mutex& fftw_planner_lock() {
    static std::mutex m;
    return m;
}

SpatialFFT::SpatialFFT(int d, int n, double L) : d_(d), n_(n), L_(L) {
    real_size_ = 1;
    for (int i = 0; i < d; ++i) real_size_ *= static_cast<std::size_t>(n);
    spec_size_ = real_size_ / static_cast<std::size_t>(n) * static_cast<std::size_t>(n / 2 + 1);

    std::vector<int> dims(static_cast<std::size_t>(d), n);
    std::vector<double> rbuf(real_size_);
    std::vector<cplx> cbuf(spec_size_);
    {
        std::lock_guard<std::mutex> lock(fftw_planner_lock());
        unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        plan_fwd_ = fftw_plan_dft_r2c(d, dims.data(), rbuf.data(),
                                      reinterpret_cast<fftw_complex*>(cbuf.data()), flags);
        plan_bwd_ = fftw_plan_dft_c2r(d, dims.data(), reinterpret_cast<fftw_complex*>(cbuf.data()),
                                      rbuf.data(), flags | FFTW_DESTROY_INPUT);
    }

    kappa_.assign(static_cast<std::size_t>(d), std::vector<double>(spec_size_, 0.0));
    kappa_sq_.assign(spec_size_, 0.0);
    null_.assign(spec_size_, 1);
    weight_.assign(spec_size_, 1.0);
    const double base = 2.0 * std::numbers::pi / L;
    for (std::size_t idx = 0; idx < spec_size_; ++idx) {
        for (int j = 0; j < d; ++j) {
            long m = mode(idx, j);
            bool nyquist = std::abs(m) == n / 2;
            double kj = nyquist ? 0.0 : base * static_cast<double>(m);
            kappa_[static_cast<std::size_t>(j)][idx] = kj;
            kappa_sq_[idx] += kj * kj;
            if (m != 0 && !nyquist) null_[idx] = 0;
        }
        long last = static_cast<long>(idx % static_cast<std::size_t>(n / 2 + 1));
        weight_[idx] = (last == 0 || last == n / 2) ? 1.0 : 2.0;
    }
}

SpatialFFT::~SpatialFFT() {
    std::lock_guard<std::mutex> lock(fftw_planner_lock());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(plan_bwd_));
}

long SpatialFFT::mode(std::size_t idx, int j) const {
    const std::size_t half = static_cast<std::size_t>(n_ / 2 + 1);
    if (j == d_ - 1) return static_cast<long>(idx % half);
    std::size_t rest = idx / half;
    for (int k = d_ - 2; k > j; --k) rest /= static_cast<std::size_t>(n_);
    return signed_mode(static_cast<long>(rest % static_cast<std::size_t>(n_)), n_);
}

void SpatialFFT::forward(const double* in, cplx* out) const {
    fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_fwd_), const_cast<double*>(in),
                         reinterpret_cast<fftw_complex*>(out));
}

void SpatialFFT::backward(cplx* in, double* out) const {
    fftw_execute_dft_c2r(static_cast<fftw_plan>(plan_bwd_), reinterpret_cast<fftw_complex*>(in), out);
    const double scale = 1.0 / static_cast<double>(real_size_);
    for (std::size_t i = 0; i < real_size_; ++i) out[i] *= scale;
}

StridedFFT::StridedFFT(int n, std::size_t howmany) {
    std::vector<cplx> buf(static_cast<std::size_t>(n) * howmany);
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    int hm = static_cast<int>(howmany);
    std::lock_guard<std::mutex> lock(fftw_planner_lock());
    unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    plan_fwd_ = fftw_plan_many_dft(1, &n, hm, p, nullptr, hm, 1, p, nullptr, hm, 1, FFTW_FORWARD, flags);
    plan_bwd_ = fftw_plan_many_dft(1, &n, hm, p, nullptr, hm, 1, p, nullptr, hm, 1, FFTW_BACKWARD, flags);
}

StridedFFT::~StridedFFT() {
    std::lock_guard<std::mutex> lock(fftw_planner_lock());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(plan_bwd_));
}

void StridedFFT::forward(cplx* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(static_cast<fftw_plan>(plan_fwd_), p, p);
}

void StridedFFT::backward(cplx* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(static_cast<fftw_plan>(plan_bwd_), p, p);
}

}  // namespace dh
