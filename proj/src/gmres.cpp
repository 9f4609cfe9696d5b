#include "dh/gmres.hpp"

#include <cmath>

#include "dh/kernels.hpp"

namespace dh {

namespace {

double norm(const std::vector<double>& v) { return std::sqrt(kernels::dot(v.data(), v.data(), v.size())); }

void axpy(double a, const std::vector<double>& x, std::vector<double>& y) {
    const long n = static_cast<long>(y.size());
#pragma omp parallel for schedule(static) num_threads(kernels::threads())
    for (long i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] += a * x[static_cast<std::size_t>(i)];
}

}  // namespace

GmresResult gmres(const LinearOp& A, const LinearOp& precond, const std::vector<double>& b,
                  std::vector<double>& x, const GmresOptions& opts) {
    const std::size_t n = b.size();
    GmresResult res;
    x.resize(n, 0.0);
    const double bnorm = norm(b);
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        res.converged = true;
        res.history.push_back(0.0);
        return res;
    }
    const int m = opts.restart;
    std::vector<std::vector<double>> V(static_cast<std::size_t>(m + 1));
    std::vector<double> H(static_cast<std::size_t>((m + 1) * m), 0.0);
    std::vector<double> cs(static_cast<std::size_t>(m)), sn(static_cast<std::size_t>(m)), g(static_cast<std::size_t>(m + 1));
    std::vector<double> r(n), z(n), w(n);
    auto h = [&](int i, int j) -> double& { return H[static_cast<std::size_t>(i * m + j)]; };

    while (true) {
        A(x, w);
        for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - w[i];
        double beta = norm(r);
        res.relative_residual = beta / bnorm;
        res.history.push_back(res.relative_residual);
        if (res.relative_residual <= opts.tol) {
            res.converged = true;
            return res;
        }
        if (res.iterations >= opts.max_iter) return res;

        V[0] = r;
        for (double& v : V[0]) v /= beta;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;
        int j = 0;
        for (; j < m && res.iterations < opts.max_iter; ++j) {
            precond(V[static_cast<std::size_t>(j)], z);
            A(z, w);
            ++res.iterations;
            for (int i = 0; i <= j; ++i) {
                h(i, j) = kernels::dot(w.data(), V[static_cast<std::size_t>(i)].data(), n);
                axpy(-h(i, j), V[static_cast<std::size_t>(i)], w);
            }
            h(j + 1, j) = norm(w);
            V[static_cast<std::size_t>(j + 1)] = w;
            if (h(j + 1, j) > 0.0)
                for (double& v : V[static_cast<std::size_t>(j + 1)]) v /= h(j + 1, j);
            for (int i = 0; i < j; ++i) {
                double t = cs[static_cast<std::size_t>(i)] * h(i, j) + sn[static_cast<std::size_t>(i)] * h(i + 1, j);
                h(i + 1, j) = -sn[static_cast<std::size_t>(i)] * h(i, j) + cs[static_cast<std::size_t>(i)] * h(i + 1, j);
                h(i, j) = t;
            }
            double denom = std::hypot(h(j, j), h(j + 1, j));
            cs[static_cast<std::size_t>(j)] = denom > 0.0 ? h(j, j) / denom : 1.0;
            sn[static_cast<std::size_t>(j)] = denom > 0.0 ? h(j + 1, j) / denom : 0.0;
            h(j, j) = denom;
            h(j + 1, j) = 0.0;
            g[static_cast<std::size_t>(j + 1)] = -sn[static_cast<std::size_t>(j)] * g[static_cast<std::size_t>(j)];
            g[static_cast<std::size_t>(j)] *= cs[static_cast<std::size_t>(j)];
            double est = std::abs(g[static_cast<std::size_t>(j + 1)]) / bnorm;
            res.history.push_back(est);
            if (est <= 0.5 * opts.tol || denom == 0.0) {
                ++j;
                break;
            }
        }
        std::vector<double> y(static_cast<std::size_t>(j));
        for (int i = j - 1; i >= 0; --i) {
            double acc = g[static_cast<std::size_t>(i)];
            for (int k = i + 1; k < j; ++k) acc -= h(i, k) * y[static_cast<std::size_t>(k)];
            y[static_cast<std::size_t>(i)] = h(i, i) != 0.0 ? acc / h(i, i) : 0.0;
        }
        std::fill(w.begin(), w.end(), 0.0);
        for (int i = 0; i < j; ++i) axpy(y[static_cast<std::size_t>(i)], V[static_cast<std::size_t>(i)], w);
        precond(w, z);
        axpy(1.0, z, x);
    }
}

}  // namespace dh
