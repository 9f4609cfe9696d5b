#include "dh/stream_solver.hpp"

#include <algorithm>
#include <cmath>

#include "dh/environment.hpp"
#include "dh/errors.hpp"
#include "dh/fft.hpp"
#include "dh/kernels.hpp"

namespace dh {

namespace {

double max_abs(const Field& f) {
    double m = 0.0;
    for (double v : f) m = std::max(m, std::abs(v));
    return m;
}

void check_input(const VectorField& b, const SpaceTimeGrid& grid) {
    grid.validate();
    if (static_cast<int>(b.size()) != grid.d) throw DimensionMismatch("stream solver: drift has wrong component count");
    for (const auto& c : b)
        if (c.size() != grid.size()) throw DimensionMismatch("stream solver: drift size does not match grid");
    double rel = relative_divergence(b, grid);
    if (rel > 1e-8) throw DivergenceError("stream solver: drift divergence " + std::to_string(rel) + " exceeds 1e-8 (relative)");
}

StreamRecovery solve(const VectorField& b, const SpaceTimeGrid& grid, double alpha) {
    check_input(b, grid);
    const int d = grid.d;
    SpatialFFT fft(d, grid.n_x, grid.L);
    const std::size_t ns = fft.real_size(), nk = fft.spectral_size();
    StreamRecovery out;
    out.alpha = alpha;
    out.s_rec = MatrixField(d, grid.size());
    if (d == 2) out.warnings.push_back("d = 2: stream matrix is a torus surrogate; the whole-space existence argument needs d >= 3");

    const auto& k2 = fft.kappa_sq();
    const long nt = grid.n_t;
#pragma omp parallel num_threads(kernels::threads())
    {
        std::vector<std::vector<cplx>> bh(static_cast<std::size_t>(d), std::vector<cplx>(nk));
        std::vector<cplx> sh(nk);
#pragma omp for schedule(static)
        for (long t = 0; t < nt; ++t) {
            const std::size_t off = static_cast<std::size_t>(t) * ns;
            for (int k = 0; k < d; ++k) fft.forward(b[static_cast<std::size_t>(k)].data() + off, bh[static_cast<std::size_t>(k)].data());
            for (int j = 0; j < d; ++j)
                for (int k = j + 1; k < d; ++k) {
                    const auto& kj = fft.kappa(j);
                    const auto& kk = fft.kappa(k);
                    for (std::size_t m = 0; m < nk; ++m) {
                        double den = alpha + k2[m];
                        if (den == 0.0) {
                            sh[m] = 0.0;
                            continue;
                        }
                        cplx src = cplx(0.0, kj[m]) * bh[static_cast<std::size_t>(k)][m] - cplx(0.0, kk[m]) * bh[static_cast<std::size_t>(j)][m];
                        sh[m] = src / den;
                    }
                    fft.backward(sh.data(), out.s_rec.at(j, k).data() + off);
                    const double* sjk = out.s_rec.at(j, k).data() + off;
                    double* skj = out.s_rec.at(k, j).data() + off;
                    for (std::size_t q = 0; q < ns; ++q) skj[q] = -sjk[q];
                }
        }
    }

    VectorField div = stream_divergence(out.s_rec, grid);
    double bmax = 0.0;
    for (int i = 0; i < d; ++i) {
        const Field& bi = b[static_cast<std::size_t>(i)];
        bmax = std::max(bmax, max_abs(bi));
        for (int t = 0; t < grid.n_t; ++t) {
            const std::size_t off = static_cast<std::size_t>(t) * ns;
            double mean = kernels::sum(bi.data() + off, ns) / static_cast<double>(ns);
            for (std::size_t q = 0; q < ns; ++q)
                out.residual = std::max(out.residual, std::abs(div[static_cast<std::size_t>(i)][off + q] - (bi[off + q] - mean)));
        }
    }
    out.relative_residual = bmax > 0.0 ? out.residual / bmax : out.residual;
    return out;
}

}  // namespace

double relative_divergence(const VectorField& b, const SpaceTimeGrid& grid) {
    const int d = grid.d;
    SpatialFFT fft(d, grid.n_x, grid.L);
    Field div = spectral_divergence(fft, static_cast<std::size_t>(grid.n_t), b);
    double scale = 0.0;
    for (int j = 0; j < d; ++j) {
        VectorField single(static_cast<std::size_t>(d), Field(grid.size(), 0.0));
        single[static_cast<std::size_t>(j)] = b[static_cast<std::size_t>(j)];
        scale = std::max(scale, max_abs(spectral_divergence(fft, static_cast<std::size_t>(grid.n_t), single)));
    }
    double m = max_abs(div);
    return scale > 0.0 ? m / scale : m;
}

StreamRecovery solve_stream_matrix(const VectorField& b, const SpaceTimeGrid& grid) { return solve(b, grid, 0.0); }

StreamRecovery solve_stream_regularized(const VectorField& b, const SpaceTimeGrid& grid, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("stream solver: alpha must lie in (0, 1)");
    return solve(b, grid, alpha);
}

VectorField stream_divergence(const MatrixField& s, const SpaceTimeGrid& grid) {
    SpatialFFT fft(grid.d, grid.n_x, grid.L);
    const std::size_t slices = s.nodes() / fft.real_size();
    VectorField out(static_cast<std::size_t>(grid.d));
    for (int i = 0; i < grid.d; ++i) {
        VectorField row(static_cast<std::size_t>(grid.d));
        for (int j = 0; j < grid.d; ++j) row[static_cast<std::size_t>(j)] = s.at(i, j);
        out[static_cast<std::size_t>(i)] = spectral_divergence(fft, slices, row);
    }
    return out;
}

}  // namespace dh
