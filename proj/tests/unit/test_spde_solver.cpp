#include <doctest.h>

#include <cmath>
#include <array>
#include <complex>
#include <numbers>
#include <random>

#include "ktl/drift.hpp"
#include "ktl/errors.hpp"
#include "ktl/noise.hpp"
#include "ktl/solver.hpp"

using namespace ktl;
using std::numbers::pi;

namespace {

Grid grid2(int N) {
    Grid g;
    g.d = 2;
    g.N = N;
    return g;
}

std::shared_ptr<const NoiseBasis> basis2(int K, double alpha = 0.25) {
    NoiseSpec s;
    s.d = 2;
    s.K = K;
    s.alpha = alpha;
    return std::make_shared<NoiseBasis>(build_basis(s));
}

VectorField constant_field(const Grid& g, double u0, double u1) {
    return VectorField(g, {ScalarField::from_function(g, [=](const double*) { return u0; }),
                           ScalarField::from_function(g, [=](const double*) { return u1; })});
}

ScalarField smooth_rho(const Grid& g) {
    return ScalarField::from_function(g, [](const double* x) {
        return std::sin(x[0]) + 0.5 * std::cos(2 * x[1]) + 0.25 * std::sin(x[0] + x[1]);
    });
}

SolverConfig cfg_of(double eps, double dt, double T, Scheme s = Scheme::ito_euler) {
    SolverConfig c;
    c.epsilon = eps;
    c.dt = dt;
    c.T = T;
    c.scheme = s;
    c.record_every = 1;
    return c;
}

double l2(const ScalarField& f) { return lp_norm(f, 2.0); }

// Fixed deterministic unit normals for single-step comparisons.
std::vector<double> unit_normals(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> z(n);
    for (auto& v : z) v = nd(rng);
    return z;
}

} // namespace

TEST_CASE("config validation") {
    SolverConfig c = cfg_of(0.5, 1e-3, 1.0);
    CHECK_NOTHROW(c.validate());
    c.kappa = 1.0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = cfg_of(0.5, 1e-3, 1.0005);
    CHECK_THROWS_AS(c.validate(), InputError);
    c = cfg_of(1.5, 1e-3, 1.0);
    CHECK_THROWS_AS(c.validate(), InputError);
    c = cfg_of(0.5, 1e-3, 1.0);
    c.transport = Transport::semi_lagrangian;
    CHECK_THROWS_AS(c.validate(), InputError);  // semi-Lagrangian is Stratonovich only
    c.scheme = Scheme::strat_midpoint;
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("step_ito: eps=0, b=g=0 is the identity") {
    const Grid g = grid2(32);
    const ScalarField r = smooth_rho(g);
    const ScalarField out = step_ito(r, VectorField(), VectorField(), NoiseBasis{}, cfg_of(0.0, 1e-2, 1e-2), std::vector<double>{});
    CHECK(lp_norm(out - r, kInf) <= 1e-14);
}

TEST_CASE("step_ito: translation sin(x1 - t) at first order") {
    const Grid g = grid2(32);
    const ScalarField r0 = ScalarField::from_function(g, [](const double* x) { return std::sin(x[0]); });
    const auto exact = ScalarField::from_function(g, [](const double* x) { return std::sin(x[0] - 1.0); });
    auto err_at = [&](double dt) {
        const auto tr = evolve(r0, SpaceTimeField::stationary(constant_field(g, 1, 0)), Control{}, nullptr,
                               cfg_of(0.0, dt, 1.0));
        return lp_norm(tr.final_field() - exact, kInf);
    };
    const double e1 = err_at(1e-2), e2 = err_at(5e-3);
    // Forward Euler on the mode e^{ix}: amplitude error ~ T dt / 2.
    CHECK(e1 <= 1e-2);
    CHECK(e2 <= 5e-3);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("step_ito: eps=0.5, b=0 single step matches the hand update") {
    const Grid g = grid2(32);
    const auto basis = basis2(2);
    const double eps = 0.5, dt = 1e-3;
    // Four-mode field and its analytic gradient.
    auto rho_f = [](const double* x) {
        return std::sin(x[0]) + 0.5 * std::cos(2 * x[1]) + 0.25 * std::sin(x[0] + x[1]) + 0.1 * std::cos(x[0] - 2 * x[1]);
    };
    auto grad_f = [](const double* x, double* gr) {
        gr[0] = std::cos(x[0]) + 0.25 * std::cos(x[0] + x[1]) - 0.1 * std::sin(x[0] - 2 * x[1]);
        gr[1] = -std::sin(2 * x[1]) + 0.25 * std::cos(x[0] + x[1]) + 0.2 * std::sin(x[0] - 2 * x[1]);
    };
    auto lap_f = [](const double* x) {
        return -std::sin(x[0]) - 2.0 * std::cos(2 * x[1]) - 0.5 * std::sin(x[0] + x[1]) - 0.5 * std::cos(x[0] - 2 * x[1]);
    };
    std::vector<double> dw = unit_normals(basis->size(), 7);
    for (auto& v : dw) v *= std::sqrt(dt);
    const ScalarField rho = ScalarField::from_function(g, rho_f);
    SolverConfig c = cfg_of(eps, dt, dt);
    c.laplacian = LaplacianMode::explicit_euler;
    const ScalarField out = step_ito(rho, VectorField(), VectorField(), *basis, c, dw);
    // dW(x) from the basis data: sum_j dw_j theta_j e_j trig(k_j.x).
    double worst = 0.0;
    const auto& vals = out.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const Index3 idx = g.unflatten(i);
        const std::array<double, 2> x{idx[0] * g.dx(), idx[1] * g.dx()};
        double w[2] = {0, 0};
        for (std::size_t j = 0; j < basis->size(); ++j) {
            const auto& m = basis->modes[j];
            const double ph = m.k[0] * x[0] + m.k[1] * x[1];
            const double tr = m.sine ? std::sin(ph) : std::cos(ph);
            for (int a = 0; a < 2; ++a) w[a] += dw[j] * m.theta * m.e[a] * tr;
        }
        double gr[2];
        grad_f(x.data(), gr);
        const double hand = rho_f(x.data()) - eps * (w[0] * gr[0] + w[1] * gr[1]) + dt * eps * eps * lap_f(x.data());
        worst = std::max(worst, std::abs(vals[i] - hand));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("step_stratonovich: eps=0 reduces to deterministic Heun / midpoint") {
    const Grid g = grid2(32);
    const double dt = 0.05;
    const ScalarField r0 = ScalarField::from_function(g, [](const double* x) { return std::sin(x[0]); });
    const VectorField b = constant_field(g, 1, 0);
    SolverConfig c = cfg_of(0.0, dt, dt, Scheme::strat_midpoint);
    c.strat_implicit = false;
    const ScalarField heun = step_stratonovich(r0, b, VectorField(), NoiseBasis{}, c, std::vector<double>{});
    const auto heun_ref = ScalarField::from_function(
        g, [=](const double* x) { return std::sin(x[0]) - dt * std::cos(x[0]) - 0.5 * dt * dt * std::sin(x[0]); });
    CHECK(lp_norm(heun - heun_ref, kInf) <= 1e-13);

    c.strat_implicit = true;
    const ScalarField mid = step_stratonovich(r0, b, VectorField(), NoiseBasis{}, c, std::vector<double>{});
    // Cayley factor on e^{ix}: (1 - i dt/2) / (1 + i dt/2).
    const std::complex<double> f = std::complex<double>(1, -dt / 2) / std::complex<double>(1, dt / 2);
    const auto mid_ref = ScalarField::from_function(
        g, [=](const double* x) { return f.real() * std::sin(x[0]) + f.imag() * std::cos(x[0]); });
    CHECK(lp_norm(mid - mid_ref, kInf) <= 1e-12);
}

TEST_CASE("stratonovich, b=0: pathwise L2 drift") {
    const Grid g = grid2(32);
    const auto basis = basis2(4);
    const ScalarField r0 = smooth_rho(g);
    const double n0 = l2(r0);
    // Fine path at dt = 2.5e-4, coarsened for the other levels: one Brownian path.
    SolverConfig fine = cfg_of(0.5, 2.5e-4, 1.0, Scheme::strat_midpoint);
    fine.record_every = 4000;
    fine.strat_implicit = false;
    fine.seed = 11;
    const auto tf = evolve(r0, SpaceTimeField(g), Control{}, basis, fine);
    std::vector<double> drift;
    for (int factor : {4, 2, 1}) {
        SolverConfig c = fine;
        c.dt = fine.dt * factor;
        c.record_every = 100 / factor;
        const auto inc = coarsen_increments(tf.coeff_log, tf.nmodes, factor);
        auto pb = std::make_shared<Problem>();
        pb->rho0 = r0;
        pb->drift = SpaceTimeField(g);
        pb->basis = basis;
        EvolveOptions opt;
        opt.increments = &inc;
        const auto tr = evolve(pb, c, opt);
        double worst = 0.0;
        for (const auto& s : tr.snapshots) worst = std::max(worst, std::abs(l2(s) / n0 - 1.0));
        drift.push_back(worst);
        // Implicit midpoint on the same path is conservative to solver tolerance.
        c.strat_implicit = true;
        const auto ti = evolve(pb, c, opt);
        for (const auto& s : ti.snapshots) CHECK(std::abs(l2(s) / n0 - 1.0) <= 1e-10);
    }
    MESSAGE("Heun L2 drift at dt=1e-3,5e-4,2.5e-4: " << drift[0] << " " << drift[1] << " " << drift[2]);
    // Heun pass: C measured at about 20 on this fixture, pinned at 25.
    CHECK(drift[0] <= 25 * 1e-3);
    // First order in dt: each halving removes at least ~40%.
    CHECK(drift[1] <= 0.6 * drift[0]);
    CHECK(drift[2] <= 0.6 * drift[1]);
}

TEST_CASE("single step: Ito vs Stratonovich gap is O(dt) on a shared normalized increment") {
    const Grid g = grid2(32);
    const auto basis = basis2(4);
    const ScalarField r0 = smooth_rho(g);
    const std::vector<double> z = unit_normals(basis->size(), 3);
    std::vector<double> gap;
    for (double dt : {4e-3, 2e-3, 1e-3}) {
        std::vector<double> dw(z);
        for (auto& v : dw) v *= std::sqrt(dt);
        const SolverConfig ci = cfg_of(0.5, dt, dt);
        const SolverConfig cs = cfg_of(0.5, dt, dt, Scheme::strat_midpoint);
        const auto a = step_ito(r0, VectorField(), VectorField(), *basis, ci, dw);
        const auto b = step_stratonovich(r0, VectorField(), VectorField(), *basis, cs, dw);
        gap.push_back(l2(a - b));
    }
    const double order = 0.5 * (std::log2(gap[0] / gap[1]) + std::log2(gap[1] / gap[2]));
    MESSAGE("single-step gap order " << order);
    CHECK(order >= 0.8);
}

TEST_CASE("evolve: eps=0, b=0 keeps every snapshot at rho0; structure") {
    const Grid g = grid2(16);
    const ScalarField r0 = smooth_rho(g);
    SolverConfig c = cfg_of(0.0, 1e-2, 0.1);
    c.record_every = 2;
    const auto tr = evolve(r0, SpaceTimeField(g), Control{}, nullptr, c);
    REQUIRE(tr.snapshots.size() == 6);
    CHECK(tr.times.front() == 0.0);
    for (std::size_t i = 1; i < tr.times.size(); ++i) CHECK(tr.times[i] > tr.times[i - 1]);
    CHECK(tr.times.back() == doctest::Approx(0.1).epsilon(1e-14));
    for (const auto& s : tr.snapshots) CHECK(lp_norm(s - r0, kInf) <= 1e-14);
}

TEST_CASE("evolve: determinism") {
    const Grid g = grid2(16);
    const auto basis = basis2(2);
    SolverConfig c = cfg_of(0.5, 1e-3, 0.05);
    c.seed = 99;
    c.record_every = 10;
    const auto a = evolve(smooth_rho(g), SpaceTimeField(g), Control{}, basis, c);
    const auto b = evolve(smooth_rho(g), SpaceTimeField(g), Control{}, basis, c);
    REQUIRE(a.snapshots.size() == b.snapshots.size());
    for (std::size_t i = 0; i < a.snapshots.size(); ++i) CHECK(a.snapshots[i].values() == b.snapshots[i].values());
    CHECK(a.coeff_log == b.coeff_log);
    c.seed = 100;
    const auto d = evolve(smooth_rho(g), SpaceTimeField(g), Control{}, basis, c);
    CHECK(d.final_field().values() != a.final_field().values());
}

TEST_CASE("evolve: N=64, eps=0.3, cellular drift keeps sup L2 within 1e-3") {
    const Grid g = grid2(64);
    DriftSpec ds;
    ds.kind = DriftKind::cellular;
    const Drift b = synthesize_drift(ds, g);
    NoiseSpec ns;
    ns.d = 2;
    ns.K = 8;
    ns.alpha = 0.25;
    const auto basis = std::make_shared<NoiseBasis>(build_basis(ns));
    const ScalarField r0 = ScalarField::from_function(g, [](const double* x) { return std::sin(x[0]); });
    SolverConfig c = cfg_of(0.3, 1e-3, 1.0);
    c.seed = 5;
    c.record_every = 50;
    c.log_coefficients = false;
    const auto tr = evolve(r0, b.st, Control{}, basis, c);
    double sup = 0.0;
    for (const auto& s : tr.snapshots) sup = std::max(sup, l2(s));
    CHECK(sup <= l2(r0) * (1 + 1e-3));
}

TEST_CASE("weak_residual") {
    const Grid g = grid2(32);
    const ScalarField phi = ScalarField::from_function(g, [](const double* x) { return std::sin(x[0]); });

    SUBCASE("eps=0, b=0 is identically zero") {
        const auto tr = evolve(smooth_rho(g), SpaceTimeField(g), Control{}, nullptr, cfg_of(0.0, 1e-2, 0.2));
        for (double r : weak_residual(tr, phi)) CHECK(std::abs(r) <= 1e-10);
    }
    SUBCASE("translation: residual O(dt)") {
        const ScalarField r0 = ScalarField::from_function(g, [](const double* x) { return std::sin(x[0]); });
        auto worst = [&](double dt) {
            const auto tr = evolve(r0, SpaceTimeField::stationary(constant_field(g, 1, 0)), Control{}, nullptr,
                                   cfg_of(0.0, dt, 1.0));
            double w = 0.0;
            for (double r : weak_residual(tr, phi)) w = std::max(w, std::abs(r));
            return w;
        };
        const double w1 = worst(1e-2), w2 = worst(5e-3);
        // |<sin, sin>| = 2 pi^2; C = 4 pi^2 leaves room for the forward-Euler constant.
        CHECK(w1 <= 4 * pi * pi * 1e-2);
        CHECK(w2 <= 4 * pi * pi * 5e-3);
    }
    SUBCASE("stochastic run: residual decays under refinement of one path") {
        const auto basis = basis2(4);
        const ScalarField r0 = smooth_rho(g);
        SolverConfig fine = cfg_of(0.5, 2.5e-4, 0.5);
        fine.record_every = 100;
        fine.seed = 21;
        const auto tf = evolve(r0, SpaceTimeField(g), Control{}, basis, fine);
        std::vector<double> w;
        for (int factor : {8, 4, 1}) {
            SolverConfig c = fine;
            c.dt = fine.dt * factor;
            c.record_every = 200 / factor;
            const auto inc = coarsen_increments(tf.coeff_log, tf.nmodes, factor);
            auto pb = std::make_shared<Problem>();
            pb->rho0 = r0;
            pb->drift = SpaceTimeField(g);
            pb->basis = basis;
            EvolveOptions opt;
            opt.increments = &inc;
            const auto tr = evolve(pb, c, opt);
            double m = 0.0;
            for (double r : weak_residual(tr, phi)) m = std::max(m, std::abs(r));
            w.push_back(m);
        }
        MESSAGE("stochastic weak residual at dt=2e-3,1e-3,2.5e-4: " << w[0] << " " << w[1] << " " << w[2]);
        // ||rho0||_L2 ||phi||_C2 sqrt(dt) with C = 1.
        const double scale = l2(r0) * 1.0;
        CHECK(w[0] <= scale * std::sqrt(2e-3));
        CHECK(w[2] < w[0]);
    }
    SUBCASE("trajectory without a log is rejected") {
        const auto basis = basis2(2);
        SolverConfig c = cfg_of(0.5, 1e-3, 0.01);
        c.log_coefficients = false;
        const auto tr = evolve(smooth_rho(g), SpaceTimeField(g), Control{}, basis, c);
        CHECK_THROWS_AS(weak_residual(tr, phi), InputError);
    }
}

TEST_CASE("mean preservation and linearity across schemes") {
    const Grid g = grid2(32);
    const auto basis = basis2(4);
    DriftSpec ds;
    ds.kind = DriftKind::cellular;
    const Drift b = synthesize_drift(ds, g);
    const ScalarField r0 = ScalarField::from_function(g, [](const double* x) { return 1.0 + std::sin(x[0]) * std::cos(x[1]); });
    const ScalarField s0 = ScalarField::from_function(g, [](const double* x) { return std::cos(2 * x[0] + x[1]); });
    for (Scheme sch : {Scheme::ito_euler, Scheme::strat_midpoint}) {
        CAPTURE(to_string(sch));
        SolverConfig c = cfg_of(0.4, 1e-3, 0.1, sch);
        c.seed = 8;
        c.record_every = 20;
        const auto a = evolve(r0, b.st, Control{}, basis, c);
        for (const auto& s : a.snapshots) CHECK(std::abs(integral(s) - integral(r0)) <= 1e-10);
        const auto bb = evolve(s0, b.st, Control{}, basis, c);
        const auto ab = evolve(2.0 * r0 + (-3.0) * s0, b.st, Control{}, basis, c);
        for (std::size_t i = 0; i < ab.snapshots.size(); ++i)
            CHECK(lp_norm(ab.snapshots[i] - (2.0 * a.snapshots[i] + (-3.0) * bb.snapshots[i]), kInf) <= 1e-10);
    }
}

TEST_CASE("Ito mean energy balance, b=0") {
    const Grid g = grid2(16);
    const auto basis = basis2(2);
    const ScalarField r0 = ScalarField::from_function(g, [](const double* x) { return std::sin(x[0]) + 0.5 * std::cos(x[1]); });
    const double e0 = std::pow(l2(r0), 2);
    const int M = 256;
    std::vector<double> e(M);
    for (int i = 0; i < M; ++i) {
        SolverConfig c = cfg_of(0.5, 1e-3, 0.2);
        c.seed = 1000 + i;
        c.record_every = 200;
        c.log_coefficients = false;
        e[i] = std::pow(l2(evolve(r0, SpaceTimeField(g), Control{}, basis, c).final_field()), 2);
    }
    double mean = 0, var = 0;
    for (double v : e) mean += v / M;
    for (double v : e) var += (v - mean) * (v - mean) / (M - 1);
    const double se = std::sqrt(var / M);
    MESSAGE("E||rho_T||^2 = " << mean << " vs " << e0 << " (se " << se << ")");
    CHECK(std::abs(mean - e0) <= 3 * se + 1e-3 * e0);
}

TEST_CASE("error cases") {
    const Grid g = grid2(16);
    const ScalarField r0 = smooth_rho(g);
    SUBCASE("spectral CFL violation") {
        const auto b = SpaceTimeField::stationary(constant_field(g, 50, 0));
        CHECK_THROWS_AS(evolve(r0, b, Control{}, nullptr, cfg_of(0.0, 0.1, 0.2)), NumericalError);
    }
    SUBCASE("basis above the grid Nyquist") {
        CHECK_THROWS_AS(evolve(r0, SpaceTimeField(g), Control{}, basis2(8), cfg_of(0.5, 1e-3, 0.01)), NumericalError);
    }
    SUBCASE("explicit diffusion bound") {
        SolverConfig c = cfg_of(1.0, 0.05, 0.1);
        c.laplacian = LaplacianMode::explicit_euler;
        CHECK_THROWS_AS(evolve(r0, SpaceTimeField(g), Control{}, basis2(2), c), NumericalError);
    }
    SUBCASE("noise without a basis") {
        CHECK_THROWS_AS(evolve(r0, SpaceTimeField(g), Control{}, nullptr, cfg_of(0.5, 1e-3, 0.01)), InputError);
    }
    SUBCASE("non-finite initial datum") {
        std::vector<double> v(r0.values());
        v[3] = std::nan("");
        CHECK_THROWS_AS(evolve(ScalarField::from_values(g, v), SpaceTimeField(g), Control{}, nullptr, cfg_of(0.0, 1e-2, 0.1)),
                        InputError);
    }
}

TEST_CASE("semi-Lagrangian transport keeps the maximum principle") {
    const Grid g = grid2(32);
    DriftSpec ds;
    ds.kind = DriftKind::cellular;
    const Drift b = synthesize_drift(ds, g);
    const ScalarField r0 = ScalarField::from_function(g, [](const double* x) { return std::exp(std::cos(x[0])) * std::sin(x[1]); });
    SolverConfig c = cfg_of(0.3, 1e-2, 0.5, Scheme::strat_midpoint);
    c.transport = Transport::semi_lagrangian;
    c.seed = 4;
    c.record_every = 5;
    const auto tr = evolve(r0, b.st, Control{}, basis2(2), c);
    const double m0 = lp_norm(r0, kInf);
    for (const auto& s : tr.snapshots) {
        CHECK(lp_norm(s, kInf) <= m0 * (1 + 1e-12));
        CHECK(lp_norm(s, 2.0) <= lp_norm(r0, 2.0) * (1 + 1e-6));
    }
    CHECK(tr.origin == "semi_lagrangian");
}
