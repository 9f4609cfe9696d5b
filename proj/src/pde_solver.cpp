#include "dh/pde_solver.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include <Eigen/Dense>

#include "dh/errors.hpp"
#include "dh/fft.hpp"
#include "dh/kernels.hpp"
#include "dh/rng.hpp"

namespace dh {

void SimDomain::validate() const {
    if (d != 2 && d != 3) throw ValidationError("domain: d must be 2 or 3");
    if (m_x < 8 || !is_power_of_two(m_x)) throw ValidationError("domain: m_x must be a power of two >= 8");
    if (!(L_sim > 0.0)) throw ValidationError("domain: L_sim must be positive");
}

std::size_t SimDomain::size() const {
    std::size_t n = 1;
    for (int j = 0; j < d; ++j) n *= static_cast<std::size_t>(m_x);
    return n;
}

void SimDomain::node(std::size_t idx, double* x) const {
    for (int j = d - 1; j >= 0; --j) {
        x[j] = static_cast<double>(idx % static_cast<std::size_t>(m_x)) * h();
        idx /= static_cast<std::size_t>(m_x);
    }
}

std::string to_string(Formulation f) {
    switch (f) {
        case Formulation::direct: return "direct";
        case Formulation::transported: return "transported";
        case Formulation::limit: return "limit";
    }
    return "?";
}

namespace {

double periodic_gap(double a, double b, double L) {
    double r = std::fmod(a - b, L);
    if (r > 0.5 * L) r -= L;
    if (r < -0.5 * L) r += L;
    return r;
}

std::vector<double> centre_of(const SimDomain& dom, const std::vector<double>& c) {
    if (c.empty()) return std::vector<double>(static_cast<std::size_t>(dom.d), 0.5 * dom.L_sim);
    if (static_cast<int>(c.size()) != dom.d) throw DimensionMismatch("preset centre dimension");
    return c;
}

double bump_value(const SimDomain& dom, const double* x, std::span<const double> c, double w) {
    double r2 = 0.0;
    for (int j = 0; j < dom.d; ++j) {
        double dx = periodic_gap(x[j], c[static_cast<std::size_t>(j)], dom.L_sim);
        r2 += dx * dx;
    }
    return std::exp(-0.5 * r2 / (w * w));
}

bool has_nyquist(const SpatialFFT& fft, std::size_t idx) {
    for (int j = 0; j < fft.dim(); ++j)
        if (std::abs(fft.mode(idx, j)) == fft.n() / 2) return true;
    return false;
}

std::vector<unsigned char> nyquist_mask(const SpatialFFT& fft) {
    std::vector<unsigned char> m(fft.spectral_size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = has_nyquist(fft, i) ? 1 : 0;
    return m;
}

void phi_functions(cplx z, cplx& e, cplx& p1, cplx& p2) {
    e = std::exp(z);
    if (std::abs(z) < 0.1) {
        cplx term = 1.0, s1 = 0.0, s2 = 0.0;
        // phi1 = sum z^k/(k+1)!, phi2 = sum z^k/(k+2)!
        double f1 = 1.0, f2 = 2.0;
        for (int k = 0; k < 10; ++k) {
            s1 += term / f1;
            s2 += term / f2;
            term *= z;
            f1 *= static_cast<double>(k + 2);
            f2 *= static_cast<double>(k + 3);
        }
        p1 = s1;
        p2 = s2;
    } else {
        p1 = (e - 1.0) / z;
        p2 = (e - 1.0 - z) / (z * z);
    }
}

}  // namespace

struct TorusSampler::Impl {
    SpaceTimeGrid grid;
    double eps = 1.0;
    SimDomain dom;
    std::vector<Field> comps;
    bool spectral = false;
    int n_f = 0;
    double scale = 1.0;
    std::unique_ptr<SpatialFFT> env_fft, fine_fft;
    std::vector<long> map;
    /// [slice][component] spectra.
    std::vector<std::vector<cplx>> spectra;

    void time_cell(double t, long& it, long& it1, double& wt) const {
        double pt = t / (eps * eps) / grid.T_env * grid.n_t;
        double ft = std::floor(pt);
        it = static_cast<long>(ft) % grid.n_t;
        if (it < 0) it += grid.n_t;
        it1 = (it + 1) % grid.n_t;
        wt = pt - ft;
    }

    void sample_multilinear(double t, std::span<const double> shift, std::vector<Field>& out) const {
        const int d = dom.d;
        const std::size_t m = static_cast<std::size_t>(dom.m_x);
        std::vector<long> i0(static_cast<std::size_t>(d) * m);
        std::vector<double> w0(static_cast<std::size_t>(d) * m);
        for (int j = 0; j < d; ++j)
            for (std::size_t q = 0; q < m; ++q) {
                double p = (static_cast<double>(q) * dom.h() - shift[static_cast<std::size_t>(j)]) / eps / grid.L * grid.n_x;
                double fl = std::floor(p);
                long i = static_cast<long>(fl) % grid.n_x;
                if (i < 0) i += grid.n_x;
                i0[static_cast<std::size_t>(j) * m + q] = i;
                w0[static_cast<std::size_t>(j) * m + q] = p - fl;
            }
        long it, it1;
        double wt;
        time_cell(t, it, it1, wt);
        const std::size_t ns = grid.spatial_size();
        const std::size_t t0 = static_cast<std::size_t>(it) * ns, t1 = static_cast<std::size_t>(it1) * ns;
        const std::size_t N = dom.size(), nc = comps.size();
        const int corners = 1 << d;
#pragma omp parallel for schedule(static) num_threads(kernels::threads())
        for (std::size_t idx = 0; idx < N; ++idx) {
            std::size_t q[3] = {0, 0, 0};
            std::size_t rem = idx;
            for (int j = d - 1; j >= 0; --j) {
                q[j] = rem % m;
                rem /= m;
            }
            for (std::size_t k = 0; k < nc; ++k) out[k][idx] = 0.0;
            for (int c = 0; c < corners; ++c) {
                double w = 1.0;
                std::size_t sidx = 0;
                for (int j = 0; j < d; ++j) {
                    int bit = (c >> j) & 1;
                    double wj = w0[static_cast<std::size_t>(j) * m + q[j]];
                    w *= bit ? wj : 1.0 - wj;
                    long i = i0[static_cast<std::size_t>(j) * m + q[j]] + bit;
                    if (i >= grid.n_x) i -= grid.n_x;
                    sidx = sidx * static_cast<std::size_t>(grid.n_x) + static_cast<std::size_t>(i);
                }
                if (w == 0.0) continue;
                for (std::size_t k = 0; k < nc; ++k)
                    out[k][idx] += w * ((1.0 - wt) * comps[k][t0 + sidx] + wt * comps[k][t1 + sidx]);
            }
        }
    }

    void sample_spectral(double t, std::span<const double> shift, std::vector<Field>& out) const {
        const int d = dom.d;
        long it, it1;
        double wt;
        time_cell(t, it, it1, wt);
        const std::size_t ke = env_fft->spectral_size(), kf = fine_fft->spectral_size(), nc = comps.size();
        std::vector<cplx> phase(ke);
        const double base = 2.0 * std::numbers::pi / grid.L;
        for (std::size_t i = 0; i < ke; ++i) {
            if (map[i] < 0) continue;
            double ph = 0.0;
            for (int j = 0; j < d; ++j) ph -= base * static_cast<double>(env_fft->mode(i, j)) * shift[static_cast<std::size_t>(j)] / eps;
            phase[i] = std::polar(scale, ph);
        }
        std::size_t nfine = 1;
        for (int j = 0; j < d; ++j) nfine *= static_cast<std::size_t>(n_f);
        std::vector<Field> fine(nc, Field(nfine));
#pragma omp parallel for schedule(static) num_threads(kernels::threads())
        for (std::size_t k = 0; k < nc; ++k) {
            const auto& s0 = spectra[static_cast<std::size_t>(it) * nc + k];
            const auto& s1 = spectra[static_cast<std::size_t>(it1) * nc + k];
            std::vector<cplx> fh(kf, 0.0);
            for (std::size_t i = 0; i < ke; ++i)
                if (map[i] >= 0) fh[static_cast<std::size_t>(map[i])] = ((1.0 - wt) * s0[i] + wt * s1[i]) * phase[i];
            fine_fft->backward(fh.data(), fine[k].data());
        }
        const std::size_t m = static_cast<std::size_t>(dom.m_x), nf = static_cast<std::size_t>(n_f), N = dom.size();
#pragma omp parallel for schedule(static) num_threads(kernels::threads())
        for (std::size_t idx = 0; idx < N; ++idx) {
            std::size_t rem = idx, fi = 0, mult = 1;
            for (int j = d - 1; j >= 0; --j) {
                fi += ((rem % m) % nf) * mult;
                mult *= nf;
                rem /= m;
            }
            for (std::size_t k = 0; k < nc; ++k) out[k][idx] = fine[k][fi];
        }
    }
};

TorusSampler::TorusSampler(const SpaceTimeGrid& grid, double eps, const SimDomain& dom, std::vector<Field> comps)
    : impl_(std::make_unique<Impl>()) {
    if (!(eps > 0.0)) throw ValidationError("sampler: eps must be positive");
    if (dom.d != grid.d) throw DimensionMismatch("sampler: domain and grid dimensions differ");
    for (const auto& c : comps)
        if (c.size() != grid.size()) throw DimensionMismatch("sampler: component is not a torus field");
    Impl& s = *impl_;
    s.grid = grid;
    s.eps = eps;
    s.dom = dom;
    s.comps = std::move(comps);
    const double per = dom.m_x * eps * grid.L / dom.L_sim;
    s.n_f = static_cast<int>(std::lround(per));
    s.spectral = std::abs(per - s.n_f) <= 1e-9 * per && s.n_f >= 4 && is_power_of_two(s.n_f) && dom.m_x % s.n_f == 0;
    if (!s.spectral) return;
    const int d = grid.d;
    s.env_fft = std::make_unique<SpatialFFT>(d, grid.n_x, grid.L);
    s.fine_fft = std::make_unique<SpatialFFT>(d, s.n_f, grid.L);
    const std::size_t ke = s.env_fft->spectral_size();
    s.map.assign(ke, -1);
    s.scale = std::pow(static_cast<double>(s.n_f) / grid.n_x, d);
    for (std::size_t i = 0; i < ke; ++i) {
        bool keep = true;
        std::size_t fi = 0;
        for (int j = 0; j < d; ++j) {
            long m = s.env_fft->mode(i, j);
            if (std::abs(m) >= grid.n_x / 2 || std::abs(m) >= s.n_f / 2) keep = false;
            long mm = j == d - 1 ? m : ((m % s.n_f) + s.n_f) % s.n_f;
            fi = j == d - 1 ? fi * static_cast<std::size_t>(s.n_f / 2 + 1) + static_cast<std::size_t>(mm)
                            : fi * static_cast<std::size_t>(s.n_f) + static_cast<std::size_t>(mm);
        }
        if (keep) s.map[i] = static_cast<long>(fi);
    }
    const std::size_t ns = grid.spatial_size(), nc = s.comps.size();
    s.spectra.assign(static_cast<std::size_t>(grid.n_t) * nc, std::vector<cplx>(ke));
#pragma omp parallel for schedule(static) num_threads(kernels::threads())
    for (std::size_t q = 0; q < s.spectra.size(); ++q) {
        const std::size_t n = q / nc, k = q % nc;
        s.env_fft->forward(s.comps[k].data() + n * ns, s.spectra[q].data());
    }
}

TorusSampler::~TorusSampler() = default;
TorusSampler::TorusSampler(TorusSampler&&) noexcept = default;

bool TorusSampler::spectral() const { return impl_->spectral; }

void TorusSampler::sample(double t, std::span<const double> shift, std::vector<Field>& out) const {
    const std::size_t N = impl_->dom.size();
    if (static_cast<int>(shift.size()) != impl_->dom.d) throw DimensionMismatch("sampler: shift dimension");
    out.resize(impl_->comps.size());
    for (auto& f : out) f.resize(N);
    if (impl_->spectral)
        impl_->sample_spectral(t, shift, out);
    else
        impl_->sample_multilinear(t, shift, out);
}

TorusSampler coefficient_sampler(const EnvironmentRealization& env, double eps, const SimDomain& dom, bool transpose) {
    const int d = env.grid.d;
    const double sign = transpose ? -1.0 : 1.0;
    std::vector<Field> comps(static_cast<std::size_t>(d * d));
    for (int k = 0; k < d * d; ++k) {
        const Field& A = env.a.c[static_cast<std::size_t>(k)];
        const Field& S = env.s.c[static_cast<std::size_t>(k)];
        Field c(A.size());
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = A[i] + sign * S[i];
        comps[static_cast<std::size_t>(k)] = std::move(c);
    }
    return TorusSampler(env.grid, eps, dom, std::move(comps));
}

namespace {

/// Flux matrix minus mu*I on the simulation grid.
class CoefficientSampler {
public:
    CoefficientSampler(const EnvironmentRealization& env, double eps, const SimDomain& dom, bool transpose, double mu)
        : inner_(coefficient_sampler(env, eps, dom, transpose)), d_(env.grid.d), mu_(mu) {}

    void sample(double t, std::span<const double> shift, MatrixField& out) const {
        inner_.sample(t, shift, out.c);
        out.d = d_;
        for (int i = 0; i < d_; ++i)
            for (double& v : out.c[static_cast<std::size_t>(i * d_ + i)]) v -= mu_;
    }

private:
    TorusSampler inner_;
    int d_;
    double mu_;
};
/// Splitting constant of the exponential integrator, from the extreme coefficient values.
double splitting_constant(const EnvironmentRealization& env) {
    const int d = env.grid.d;
    double amax = 0.0, amin = 1e300, smax = 0.0;
    std::vector<double> m(static_cast<std::size_t>(d * d));
    for (std::size_t q = 0; q < env.grid.size(); ++q) {
        double fro = 0.0;
        for (int k = 0; k < d * d; ++k) {
            m[static_cast<std::size_t>(k)] = env.a.c[static_cast<std::size_t>(k)][q];
            fro += env.s.c[static_cast<std::size_t>(k)][q] * env.s.c[static_cast<std::size_t>(k)][q];
        }
        auto ev = sym_eigenvalues(d, m.data());
        amin = std::min(amin, ev.front());
        amax = std::max(amax, ev.back());
        smax = std::max(smax, std::sqrt(0.5 * fro));
    }
    if (!(amin > 0.0)) throw EllipticityViolation("pde: coefficient field is not elliptic");
    return std::max(amax, (amax * amax + smax * smax) / (2.0 * amin));
}

struct EngineSpec {
    SimDomain dom;
    double T = 0.0;
    SolveOptions opts;
    Field g;
    /// Linear symbol, constant on [t0, t1].
    std::function<void(double t0, double t1, std::vector<cplx>& L)> linear;
    /// Variable part of the flux matrix at time t; empty means none.
    std::function<void(double t, MatrixField& Cm)> flux;
    /// Source at engine time t; empty means none.
    std::function<void(double t, Field& f)> source;
    std::vector<double> breakpoints;
    double lambda = 1.0;
};

struct SourceCache {
    double t = -1.0;
    bool valid = false;
    std::vector<cplx> fhat;
    double l2sq = 0.0;
    double sup = 0.0;
};

SolutionField run_engine(const EngineSpec& spec) {
    const SimDomain& dom = spec.dom;
    const int d = dom.d;
    SpatialFFT fft(d, dom.m_x, dom.L_sim);
    const std::size_t N = dom.size(), K = fft.spectral_size();
    const double cell = std::pow(dom.h(), d);
    const double parseval = std::pow(dom.L_sim, d) / (static_cast<double>(N) * static_cast<double>(N));
    const auto nyq = nyquist_mask(fft);
    const int threads = kernels::threads();

    if (spec.g.size() != N) throw DimensionMismatch("pde: initial datum size does not match the domain");
    if (!(spec.T > 0.0)) throw ValidationError("pde: T must be positive");
    if (!(spec.opts.dt > 0.0)) throw ValidationError("pde: dt must be positive");
    if (spec.opts.n_snapshots < 1) throw ValidationError("pde: n_snapshots must be >= 1");

    SolutionField sol;
    sol.domain = dom;

    std::vector<cplx> rh(K), tmp(K);
    Field rho(N), buf(N);
    fft.forward(spec.g.data(), rh.data());
    for (std::size_t i = 0; i < K; ++i)
        if (nyq[i]) rh[i] = 0.0;

    auto to_physical = [&](const std::vector<cplx>& in, Field& out) {
        tmp = in;
        fft.backward(tmp.data(), out.data());
    };
    auto grad_sq = [&](const std::vector<cplx>& u) {
        double s = 0.0;
        for (std::size_t i = 0; i < K; ++i) s += fft.parseval_weight()[i] * fft.kappa_sq()[i] * std::norm(u[i]);
        return s * parseval;
    };
    auto linf_of = [&](const Field& u) {
        double m = 0.0;
        for (double v : u) m = std::max(m, std::abs(v));
        return m;
    };

    to_physical(rh, rho);
    sol.g_linf = linf_of(spec.g);
    sol.mass_initial = cell * kernels::sum(rho.data(), N);

    SourceCache src;
    Field fphys(N);
    auto eval_source = [&](double t) -> const SourceCache& {
        if (src.valid && src.t == t) return src;
        src.t = t;
        src.valid = true;
        spec.source(t, fphys);
        src.fhat.resize(K);
        fft.forward(fphys.data(), src.fhat.data());
        for (std::size_t i = 0; i < K; ++i)
            if (nyq[i]) src.fhat[i] = 0.0;
        src.l2sq = cell * kernels::dot(fphys.data(), fphys.data(), N);
        src.sup = linf_of(fphys);
        return src;
    };

    MatrixField Cm;
    double C_time = -1.0;
    bool C_valid = false;
    VectorField grad(static_cast<std::size_t>(d), Field(N)), fl(static_cast<std::size_t>(d), Field(N));
    std::vector<cplx> fh(K);
    auto nonlinear = [&](const std::vector<cplx>& u, double t, std::vector<cplx>& out) {
        out.assign(K, 0.0);
        if (spec.flux) {
            if (!C_valid || C_time != t) {
                spec.flux(t, Cm);
                C_time = t;
                C_valid = true;
            }
            for (int j = 0; j < d; ++j) {
                const auto& kj = fft.kappa(j);
                for (std::size_t i = 0; i < K; ++i) tmp[i] = cplx(0.0, kj[i]) * u[i];
                fft.backward(tmp.data(), grad[static_cast<std::size_t>(j)].data());
            }
            std::vector<const double*> Mp(static_cast<std::size_t>(d * d)), gp(static_cast<std::size_t>(d));
            std::vector<double*> fp(static_cast<std::size_t>(d));
            for (int k = 0; k < d * d; ++k) Mp[static_cast<std::size_t>(k)] = Cm.c[static_cast<std::size_t>(k)].data();
            for (int j = 0; j < d; ++j) {
                gp[static_cast<std::size_t>(j)] = grad[static_cast<std::size_t>(j)].data();
                fp[static_cast<std::size_t>(j)] = fl[static_cast<std::size_t>(j)].data();
            }
            kernels::apply_matrix(d, N, Mp.data(), gp.data(), fp.data());
            for (int j = 0; j < d; ++j) {
                fft.forward(fl[static_cast<std::size_t>(j)].data(), fh.data());
                const auto& kj = fft.kappa(j);
                for (std::size_t i = 0; i < K; ++i) out[i] += cplx(0.0, kj[i]) * fh[i];
            }
        }
        if (spec.source) {
            const auto& s = eval_source(t);
            for (std::size_t i = 0; i < K; ++i) out[i] += s.fhat[i];
        }
        for (std::size_t i = 0; i < K; ++i)
            if (nyq[i]) out[i] = 0.0;
    };

    // Marching grid: snapshot times and external breakpoints, equal substeps in between.
    std::vector<double> marks;
    for (int k = 1; k <= spec.opts.n_snapshots; ++k) marks.push_back(spec.T * k / spec.opts.n_snapshots);
    for (double b : spec.breakpoints)
        if (b > 0.0 && b < spec.T) marks.push_back(b);
    std::sort(marks.begin(), marks.end());
    {
        std::vector<double> u;
        for (double b : marks)
            if (u.empty() || b - u.back() > 1e-12 * spec.T) u.push_back(b);
        u.back() = spec.T;
        marks = std::move(u);
    }

    auto record = [&](double t) {
        sol.times.push_back(t);
        sol.rho.push_back(rho);
    };
    record(0.0);

    double l2sq = cell * kernels::dot(rho.data(), rho.data(), N);
    double gsq = grad_sq(rh);
    const double g_l2sq = l2sq;
    sol.max_l2_sq = l2sq;
    sol.linf = linf_of(rho);
    double f_int = 0.0, f_prev = 0.0, f_sup = 0.0;
    if (spec.source) {
        const auto& s = eval_source(0.0);
        f_prev = s.l2sq;
        f_sup = s.sup;
    }

    std::vector<cplx> Lsym(K), E(K), P1(K), P2(K), N0(K), N1(K), ah(K);
    double t = 0.0;
    std::size_t next_snap = 0;
    for (double mark : marks) {
        const double span = mark - t;
        const int sub = std::max(1, static_cast<int>(std::ceil(span / spec.opts.dt - 1e-9)));
        const double start = t;
        for (int s = 0; s < sub; ++s) {
            const double t0 = start + span * s / sub;
            const double t1 = (s + 1 == sub) ? mark : start + span * (s + 1) / sub;
            const double h = t1 - t0;
            spec.linear(t0, t1, Lsym);
#pragma omp parallel for schedule(static) num_threads(threads)
            for (std::size_t i = 0; i < K; ++i) {
                cplx e, p1, p2;
                phi_functions(Lsym[i] * h, e, p1, p2);
                E[i] = e;
                P1[i] = h * p1;
                P2[i] = h * p2;
            }
            const bool explicit_part = static_cast<bool>(spec.flux) || static_cast<bool>(spec.source);
            if (explicit_part) {
                nonlinear(rh, t0, N0);
                for (std::size_t i = 0; i < K; ++i) ah[i] = E[i] * rh[i] + P1[i] * N0[i];
                nonlinear(ah, t1, N1);
                for (std::size_t i = 0; i < K; ++i) rh[i] = ah[i] + P2[i] * (N1[i] - N0[i]);
            } else {
                for (std::size_t i = 0; i < K; ++i) rh[i] *= E[i];
            }
            to_physical(rh, rho);
            ++sol.steps;

            const double l2 = cell * kernels::dot(rho.data(), rho.data(), N);
            const double gs = grad_sq(rh);
            sol.grad_sq_integral += 0.5 * h * (gsq + gs);
            gsq = gs;
            sol.max_l2_sq = std::max(sol.max_l2_sq, l2);
            if (spec.source) {
                const auto& sc = eval_source(t1);
                f_int += 0.5 * h * (f_prev + sc.l2sq);
                f_prev = sc.l2sq;
                f_sup = std::max(f_sup, sc.sup);
            }
            const double li = linf_of(rho);
            if (!std::isfinite(li) || !std::isfinite(l2))
                throw BlowUp("pde: non-finite solution at t = " + std::to_string(t1));
            const double bound = sol.g_linf + t1 * f_sup;
            if (li > 1.05 * bound + 1e-12)
                throw BlowUp("pde: sup norm " + std::to_string(li) + " exceeds the comparison bound " + std::to_string(bound) +
                             " at t = " + std::to_string(t1));
            sol.linf = std::max(sol.linf, li);
        }
        t = mark;
        while (next_snap < static_cast<std::size_t>(spec.opts.n_snapshots) &&
               std::abs(spec.T * static_cast<double>(next_snap + 1) / spec.opts.n_snapshots - t) <= 1e-12 * spec.T) {
            record(t);
            ++next_snap;
        }
    }

    sol.f_linf = f_sup;
    sol.mass_final = cell * kernels::sum(rho.data(), N);
    sol.energy_constant = (1.0 + 1.0 / (2.0 * spec.lambda)) * std::exp(spec.T);
    sol.energy_lhs = sol.max_l2_sq + sol.grad_sq_integral;
    sol.energy_rhs = sol.energy_constant * (g_l2sq + f_int);
    sol.energy_ok = sol.energy_lhs <= sol.energy_rhs * (1.0 + 1e-12) + 1e-300;
    if (!sol.energy_ok) sol.warnings.push_back("energy estimate violated");
    return sol;
}

double boundary_fraction(const SimDomain& dom, const Field& u) {
    double total = 0.0, edge = 0.0;
    std::vector<double> x(static_cast<std::size_t>(dom.d));
    const double band = 0.05 * dom.L_sim;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dom.node(i, x.data());
        bool near = false;
        for (double c : x)
            if (c < band || c > dom.L_sim - band) near = true;
        total += std::abs(u[i]);
        if (near) edge += std::abs(u[i]);
    }
    return total > 0.0 ? edge / total : 0.0;
}

void finish(SolutionField& sol) {
    sol.boundary_mass_fraction = boundary_fraction(sol.domain, sol.final());
    if (sol.boundary_mass_fraction > 1e-6)
        sol.warnings.push_back("boundary mass fraction " + std::to_string(sol.boundary_mass_fraction) +
                               " exceeds 1e-6; enlarge the box");
}

std::vector<double> cell_breakpoints(const EnvironmentRealization& env, double eps, double T) {
    std::vector<double> b;
    const double c = eps * eps * env.grid.k();
    for (long n = 1; static_cast<double>(n) * c < T; ++n) b.push_back(static_cast<double>(n) * c);
    return b;
}

double max_bbar(const EnvironmentRealization& env) {
    double m = 0.0;
    const int d = env.grid.d;
    for (int n = 0; n < env.grid.n_t; ++n) {
        double r = 0.0;
        for (int i = 0; i < d; ++i) r += env.bbar_at(n, i) * env.bbar_at(n, i);
        m = std::max(m, std::sqrt(r));
    }
    return m;
}

/// True when a = mu*I and s = 0 everywhere, so the explicit flux vanishes identically.
bool flux_free(const EnvironmentRealization& env, double mu) {
    const int d = env.grid.d;
    for (int k = 0; k < d * d; ++k) {
        const double target = (k % (d + 1) == 0) ? mu : 0.0;
        for (double v : env.a.c[static_cast<std::size_t>(k)])
            if (v != target) return false;
        for (double v : env.s.c[static_cast<std::size_t>(k)])
            if (v != 0.0) return false;
    }
    return true;
}

int bbar_cell(const EnvironmentRealization& env, double eps, double t) {
    long c = static_cast<long>(std::floor(t / (eps * eps * env.grid.k())));
    c %= env.grid.n_t;
    if (c < 0) c += env.grid.n_t;
    return static_cast<int>(c);
}

void check_domain(const EnvironmentRealization& env, const CauchyData& data) {
    data.domain.validate();
    if (data.domain.d != env.grid.d) throw DimensionMismatch("pde: domain and environment dimensions differ");
    if (data.g.size() != data.domain.size()) throw DimensionMismatch("pde: initial datum size does not match the domain");
}

SourceFn shifted_source(const SourceFn& f, const DriftPath* path, int d, double sign) {
    return [f, path, d, sign](std::span<const double> x, double t) {
        double y[3];
        for (int j = 0; j < d; ++j) y[j] = x[static_cast<std::size_t>(j)] - sign * path->at(t, j);
        return f(std::span<const double>(y, static_cast<std::size_t>(d)), t);
    };
}

std::function<void(double, Field&)> source_sampler(const SimDomain& dom, const SourceFn& f) {
    if (!f) return {};
    return [dom, f](double t, Field& out) {
        const std::size_t N = dom.size();
        out.resize(N);
#pragma omp parallel for schedule(static) num_threads(kernels::threads())
        for (std::size_t i = 0; i < N; ++i) {
            double x[3];
            dom.node(i, x);
            out[i] = f(std::span<const double>(x, static_cast<std::size_t>(dom.d)), t);
        }
    };
}

std::vector<double> sym_part(int d, const std::vector<double>& a) {
    std::vector<double> s(static_cast<std::size_t>(d * d));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) s[static_cast<std::size_t>(i * d + j)] = 0.5 * (a[static_cast<std::size_t>(i * d + j)] + a[static_cast<std::size_t>(j * d + i)]);
    return s;
}

void unshift_all(SolutionField& sol, const DriftPath& path) {
    std::vector<double> w(static_cast<std::size_t>(sol.domain.d));
    for (std::size_t k = 0; k < sol.times.size(); ++k) {
        for (int j = 0; j < sol.domain.d; ++j) w[static_cast<std::size_t>(j)] = path.at(sol.times[k], j);
        sol.rho[k] = spectral_shift(sol.domain, sol.rho[k], w);
    }
}

}  // namespace

Field gaussian_bump(const SimDomain& dom, std::span<const double> center, double width, double amplitude) {
    Field u(dom.size());
    std::vector<double> x(static_cast<std::size_t>(dom.d));
    for (std::size_t i = 0; i < u.size(); ++i) {
        dom.node(i, x.data());
        u[i] = amplitude * bump_value(dom, x.data(), center, width);
    }
    return u;
}

Field preset_field(const SimDomain& dom, const DataPreset& p) {
    dom.validate();
    if (!(p.width > 0.0)) throw ValidationError("preset: width must be positive");
    const auto c = centre_of(dom, p.center);
    if (p.name == "gaussian-bump") return gaussian_bump(dom, c, p.width, p.amplitude);
    if (p.name == "two-bumps") {
        auto c1 = c, c2 = c;
        c1[0] -= dom.L_sim / 8.0;
        c2[0] += dom.L_sim / 8.0;
        Field u = gaussian_bump(dom, c1, p.width, p.amplitude);
        Field v = gaussian_bump(dom, c2, p.width, 0.5 * p.amplitude);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] += v[i];
        return u;
    }
    if (p.name == "indicator-mollified") {
        if (!(p.radius > 0.0)) throw ValidationError("preset: radius must be positive");
        Field u(dom.size());
        std::vector<double> x(static_cast<std::size_t>(dom.d));
        for (std::size_t i = 0; i < u.size(); ++i) {
            dom.node(i, x.data());
            double r2 = 0.0;
            for (int j = 0; j < dom.d; ++j) {
                double dx = periodic_gap(x[static_cast<std::size_t>(j)], c[static_cast<std::size_t>(j)], dom.L_sim);
                r2 += dx * dx;
            }
            u[i] = p.amplitude * 0.5 * (1.0 - std::tanh((std::sqrt(r2) - p.radius) / p.width));
        }
        return u;
    }
    throw ValidationError("unknown data preset '" + p.name + "' (gaussian-bump, two-bumps, indicator-mollified)");
}

CauchyData make_cauchy_data(const SimDomain& dom, double T, const DataPreset& p) {
    if (!(T > 0.0)) throw ValidationError("data: T must be positive");
    CauchyData data;
    data.domain = dom;
    data.T = T;
    data.g = preset_field(dom, p);
    if (p.source_amplitude != 0.0) {
        const auto c = centre_of(dom, p.center);
        const double w = p.width, A = p.source_amplitude;
        data.f = [dom, c, w, A](std::span<const double> x, double) { return A * bump_value(dom, x.data(), c, w); };
    }
    return data;
}

DriftPath transport_path(const EnvironmentRealization& env, double eps, double T) {
    TemporalSeries s = torus_bbar_series(env, T / (eps * eps) + env.grid.k());
    return integrate_path(s, eps, T, eps * eps * s.dt);
}

SolutionField solve_epsilon_pde(const EnvironmentRealization& env, double eps, const CauchyData& data,
                                const SolveOptions& opts) {
    if (!(eps > 0.0)) throw ValidationError("solve_epsilon_pde: eps must be positive");
    check_domain(env, data);
    const double bmax = max_bbar(env);
    if (bmax > 0.0 && opts.dt > 0.5 * data.domain.h() * eps / bmax)
        throw StabilityError("solve_epsilon_pde: dt = " + std::to_string(opts.dt) + " exceeds the transport limit " +
                             std::to_string(0.5 * data.domain.h() * eps / bmax));
    const double mu = splitting_constant(env);
    const int d = env.grid.d;
    SpatialFFT fft(d, data.domain.m_x, data.domain.L_sim);
    std::vector<std::vector<double>> kap;
    for (int j = 0; j < d; ++j) kap.push_back(fft.kappa(j));
    const std::vector<double> ksq = fft.kappa_sq();

    EngineSpec spec;
    spec.dom = data.domain;
    spec.T = data.T;
    spec.opts = opts;
    spec.g = data.g;
    spec.lambda = env.params.lambda;
    spec.breakpoints = cell_breakpoints(env, eps, data.T);
    spec.linear = [&env, eps, mu, kap, ksq, d](double t0, double t1, std::vector<cplx>& L) {
        const int c = bbar_cell(env, eps, 0.5 * (t0 + t1));
        for (std::size_t i = 0; i < L.size(); ++i) {
            double adv = 0.0;
            for (int j = 0; j < d; ++j) adv += kap[static_cast<std::size_t>(j)][i] * env.bbar_at(c, j) / eps;
            L[i] = cplx(-mu * ksq[i], adv);
        }
    };
    auto sampler = std::make_shared<CoefficientSampler>(env, eps, data.domain, false, mu);
    std::vector<double> zero(static_cast<std::size_t>(d), 0.0);
    if (!flux_free(env, mu)) spec.flux = [sampler, zero](double t, MatrixField& Cm) { sampler->sample(t, zero, Cm); };
    spec.source = source_sampler(data.domain, data.f);
    SolutionField sol = run_engine(spec);
    sol.formulation = Formulation::direct;
    sol.mu = mu;
    finish(sol);
    return sol;
}

SolutionField solve_transported_pde(const EnvironmentRealization& env, double eps, const CauchyData& data,
                                    const DriftPath& w, const SolveOptions& opts) {
    if (!(eps > 0.0)) throw ValidationError("solve_transported_pde: eps must be positive");
    check_domain(env, data);
    if (w.d != env.grid.d) throw DimensionMismatch("solve_transported_pde: path dimension");
    if (w.times.empty() || w.times.back() < data.T * (1.0 - 1e-12))
        throw ResolutionError("solve_transported_pde: path shorter than the horizon");
    const double mu = splitting_constant(env);
    SpatialFFT fft(env.grid.d, data.domain.m_x, data.domain.L_sim);
    const std::vector<double> ksq = fft.kappa_sq();

    EngineSpec spec;
    spec.dom = data.domain;
    spec.T = data.T;
    spec.opts = opts;
    spec.g = data.g;
    spec.lambda = env.params.lambda;
    spec.breakpoints = cell_breakpoints(env, eps, data.T);
    spec.linear = [mu, ksq](double, double, std::vector<cplx>& L) {
        for (std::size_t i = 0; i < L.size(); ++i) L[i] = -mu * ksq[i];
    };
    auto sampler = std::make_shared<CoefficientSampler>(env, eps, data.domain, false, mu);
    const DriftPath* wp = &w;
    const int d = env.grid.d;
    if (!flux_free(env, mu)) spec.flux = [sampler, wp, d](double t, MatrixField& Cm) {
        std::vector<double> shift(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) shift[static_cast<std::size_t>(j)] = wp->at(t, j);
        sampler->sample(t, shift, Cm);
    };
    if (data.f) spec.source = source_sampler(data.domain, shifted_source(data.f, wp, d, 1.0));
    SolutionField sol = run_engine(spec);
    sol.formulation = Formulation::transported;
    sol.mu = mu;
    sol.frame = "transported";
    if (opts.unshift) {
        unshift_all(sol, w);
        sol.frame = "physical";
    }
    finish(sol);
    return sol;
}

SolutionField solve_transported_pde(const EnvironmentRealization& env, double eps, const CauchyData& data,
                                    const SolveOptions& opts) {
    DriftPath w = transport_path(env, eps, data.T);
    return solve_transported_pde(env, eps, data, w, opts);
}

DriftPath brownian_shift(int d, const std::vector<double>& sigma, double T, double dt, std::uint64_t seed) {
    if (sigma.size() != static_cast<std::size_t>(d * d)) throw DimensionMismatch("brownian_shift: sigma must be d x d");
    if (!(T > 0.0) || !(dt > 0.0)) throw ValidationError("brownian_shift: T and dt must be positive");
    const std::size_t steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    const double h = T / static_cast<double>(steps);
    Rng rng = make_rng(seed, "brownian");
    std::normal_distribution<double> normal(0.0, 1.0);
    DriftPath p;
    p.d = d;
    p.source_seed = seed;
    p.times.resize(steps + 1);
    p.values.assign((steps + 1) * static_cast<std::size_t>(d), 0.0);
    std::vector<double> B(static_cast<std::size_t>(d), 0.0);
    for (std::size_t n = 0; n <= steps; ++n) {
        p.times[n] = T * static_cast<double>(n) / static_cast<double>(steps);
        if (n > 0)
            for (int j = 0; j < d; ++j) B[static_cast<std::size_t>(j)] += std::sqrt(h) * normal(rng);
        for (int i = 0; i < d; ++i) {
            double v = 0.0;
            for (int j = 0; j < d; ++j) v += sigma[static_cast<std::size_t>(i * d + j)] * B[static_cast<std::size_t>(j)];
            p.values[n * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)] = v;
        }
    }
    return p;
}

SolutionField solve_limit_coupled(const std::vector<double>& a_bar, const DriftPath& shift, const CauchyData& data,
                                  const SolveOptions& opts) {
    data.domain.validate();
    const int d = data.domain.d;
    if (a_bar.size() != static_cast<std::size_t>(d * d)) throw DimensionMismatch("solve_limit: a_bar must be d x d");
    if (shift.d != d) throw DimensionMismatch("solve_limit: shift dimension");
    if (shift.times.empty() || shift.times.back() < data.T * (1.0 - 1e-12))
        throw ResolutionError("solve_limit: shift path shorter than the horizon");
    const auto as = sym_part(d, a_bar);
    const auto ev = sym_eigenvalues(d, as.data());
    if (!(ev.front() > 0.0)) throw EllipticityError("solve_limit: sym(a_bar) has eigenvalue " + std::to_string(ev.front()));
    SpatialFFT fft(d, data.domain.m_x, data.domain.L_sim);
    std::vector<double> sym(fft.spectral_size(), 0.0);
    for (std::size_t i = 0; i < sym.size(); ++i)
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) sym[i] += as[static_cast<std::size_t>(r * d + c)] * fft.kappa(r)[i] * fft.kappa(c)[i];

    EngineSpec spec;
    spec.dom = data.domain;
    spec.T = data.T;
    spec.opts = opts;
    spec.g = data.g;
    spec.lambda = ev.front();
    spec.linear = [sym](double, double, std::vector<cplx>& L) {
        for (std::size_t i = 0; i < L.size(); ++i) L[i] = -sym[i];
    };
    const DriftPath* sp = &shift;
    if (data.f) spec.source = source_sampler(data.domain, shifted_source(data.f, sp, d, 1.0));
    SolutionField sol = run_engine(spec);
    sol.formulation = Formulation::limit;
    sol.frame = "transported";
    if (opts.unshift) {
        unshift_all(sol, shift);
        sol.frame = "physical";
    }
    finish(sol);
    return sol;
}

SolutionField solve_limit_spde(const std::vector<double>& a_bar, const std::vector<double>& sigma,
                               const CauchyData& data, std::uint64_t brownian_seed, const SolveOptions& opts) {
    data.domain.validate();
    const int d = data.domain.d;
    const int ns = std::max(1, opts.n_snapshots);
    const double per = data.T / ns;
    const double h = per / std::ceil(per / opts.dt - 1e-9);
    DriftPath B = brownian_shift(d, sigma, data.T, h, brownian_seed);
    return solve_limit_coupled(a_bar, B, data, opts);
}

SolutionField solve_adjoint_pde(const EnvironmentRealization& env, double eps, const SimDomain& dom, double T,
                                const Field& psi_T, const SourceFn& h, const SolveOptions& opts) {
    dom.validate();
    if (dom.d != env.grid.d) throw DimensionMismatch("solve_adjoint_pde: dimension");
    const double mu = splitting_constant(env);
    const int d = env.grid.d;
    SpatialFFT fft(d, dom.m_x, dom.L_sim);
    std::vector<std::vector<double>> kap;
    for (int j = 0; j < d; ++j) kap.push_back(fft.kappa(j));
    const std::vector<double> ksq = fft.kappa_sq();

    EngineSpec spec;
    spec.dom = dom;
    spec.T = T;
    spec.opts = opts;
    spec.g = psi_T;
    spec.lambda = env.params.lambda;
    for (double b : cell_breakpoints(env, eps, T)) spec.breakpoints.push_back(T - b);
    spec.linear = [&env, eps, mu, kap, ksq, d, T](double t0, double t1, std::vector<cplx>& L) {
        const int c = bbar_cell(env, eps, T - 0.5 * (t0 + t1));
        for (std::size_t i = 0; i < L.size(); ++i) {
            double adv = 0.0;
            for (int j = 0; j < d; ++j) adv -= kap[static_cast<std::size_t>(j)][i] * env.bbar_at(c, j) / eps;
            L[i] = cplx(-mu * ksq[i], adv);
        }
    };
    auto sampler = std::make_shared<CoefficientSampler>(env, eps, dom, true, mu);
    std::vector<double> zero(static_cast<std::size_t>(d), 0.0);
    if (!flux_free(env, mu)) spec.flux = [sampler, zero, T](double tau, MatrixField& Cm) { sampler->sample(T - tau, zero, Cm); };
    if (h) {
        SourceFn hr = [h, T](std::span<const double> x, double tau) { return h(x, T - tau); };
        spec.source = source_sampler(dom, hr);
    }
    SolutionField sol = run_engine(spec);
    std::reverse(sol.times.begin(), sol.times.end());
    for (double& t : sol.times) t = T - t;
    std::reverse(sol.rho.begin(), sol.rho.end());
    sol.formulation = Formulation::direct;
    sol.mu = mu;
    finish(sol);
    return sol;
}

Field heat_gaussian(const SimDomain& dom, std::span<const double> center, double width, double amplitude,
                    const std::vector<double>& A, double t) {
    const int d = dom.d;
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(d, d) * width * width;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) S(i, j) += t * (A[static_cast<std::size_t>(i * d + j)] + A[static_cast<std::size_t>(j * d + i)]);
    const Eigen::MatrixXd Si = S.inverse();
    const double pref = amplitude * std::pow(width, d) / std::sqrt(S.determinant());
    Field u(dom.size(), 0.0);
    const int R = 2;
    const int images = static_cast<int>(std::pow(2 * R + 1, d));
    std::vector<double> x(static_cast<std::size_t>(d));
    Eigen::VectorXd r(d);
    for (std::size_t idx = 0; idx < u.size(); ++idx) {
        dom.node(idx, x.data());
        double acc = 0.0;
        for (int im = 0; im < images; ++im) {
            int code = im;
            for (int j = 0; j < d; ++j) {
                int shift = code % (2 * R + 1) - R;
                code /= (2 * R + 1);
                r(j) = x[static_cast<std::size_t>(j)] - center[static_cast<std::size_t>(j)] + shift * dom.L_sim;
            }
            acc += std::exp(-0.5 * r.dot(Si * r));
        }
        u[idx] = pref * acc;
    }
    return u;
}

double integrate(const SimDomain& dom, const Field& u) { return std::pow(dom.h(), dom.d) * kernels::sum(u.data(), u.size()); }

double inner(const SimDomain& dom, const Field& u, const Field& v) {
    if (u.size() != v.size()) throw DimensionMismatch("inner: size mismatch");
    return std::pow(dom.h(), dom.d) * kernels::dot(u.data(), v.data(), u.size());
}

double l2_norm(const SimDomain& dom, const Field& u) { return std::sqrt(inner(dom, u, u)); }

double spacetime_l2(const SolutionField& u) {
    double s = 0.0;
    for (std::size_t k = 1; k < u.times.size(); ++k) {
        const double a = inner(u.domain, u.rho[k - 1], u.rho[k - 1]), b = inner(u.domain, u.rho[k], u.rho[k]);
        s += 0.5 * (u.times[k] - u.times[k - 1]) * (a + b);
    }
    return std::sqrt(s);
}

double spacetime_l2_difference(const SolutionField& u, const SolutionField& v) {
    if (u.times.size() != v.times.size() || !(u.domain == v.domain))
        throw DimensionMismatch("spacetime_l2_difference: snapshot grids differ");
    std::vector<double> e(u.times.size());
    for (std::size_t k = 0; k < e.size(); ++k) {
        if (std::abs(u.times[k] - v.times[k]) > 1e-12 * (1.0 + std::abs(u.times[k])))
            throw DimensionMismatch("spacetime_l2_difference: snapshot times differ");
        Field diff(u.rho[k].size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = u.rho[k][i] - v.rho[k][i];
        e[k] = inner(u.domain, diff, diff);
    }
    double s = 0.0;
    for (std::size_t k = 1; k < e.size(); ++k) s += 0.5 * (u.times[k] - u.times[k - 1]) * (e[k - 1] + e[k]);
    return std::sqrt(s);
}

Field spectral_shift(const SimDomain& dom, const Field& u, std::span<const double> shift) {
    SpatialFFT fft(dom.d, dom.m_x, dom.L_sim);
    std::vector<cplx> uh(fft.spectral_size());
    fft.forward(u.data(), uh.data());
    for (std::size_t i = 0; i < uh.size(); ++i) {
        if (has_nyquist(fft, i)) {
            uh[i] = 0.0;
            continue;
        }
        double ph = 0.0;
        for (int j = 0; j < dom.d; ++j) ph += fft.kappa(j)[i] * shift[static_cast<std::size_t>(j)];
        uh[i] *= std::polar(1.0, ph);
    }
    Field out(u.size());
    fft.backward(uh.data(), out.data());
    return out;
}

}  // namespace dh
