#pragma once

#include <functional>
#include <vector>

namespace dh {

using LinearOp = std::function<void(const std::vector<double>& in, std::vector<double>& out)>;

struct GmresOptions {
    double tol = 1e-9;
    int restart = 30;
    int max_iter = 4000;
};

struct GmresResult {
    int iterations = 0;
    double relative_residual = 0.0;
    std::vector<double> history;
    bool converged = false;
};

/// Right-preconditioned restarted GMRES for A x = b, starting from the given x.
/// Convergence is declared on the true residual ||b - A x|| / ||b|| <= tol.
GmresResult gmres(const LinearOp& A, const LinearOp& precond, const std::vector<double>& b,
                  std::vector<double>& x, const GmresOptions& opts);

}  // namespace dh
