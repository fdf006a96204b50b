#include "catch_amalgamated.hpp"

#include <vpb/vpb_solver.hpp>

#include <chrono>
#include <cmath>
#include <iostream>
#include <random>

using namespace vpb;

namespace {

// Direct convolution oracle for N1 + N2 on the unpadded mode set.
Eigen::MatrixXcd convolution_rhs(const VpbSolver& s, const KineticState& st)
{
    const ModeGrid& g = s.grid();
    const HermiteBasis& b = s.model().basis();
    const CollisionModel& model = s.model();
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(st.g.rows(), st.g.cols());
    const int N = g.cut();
    for (std::size_t j = 0; j < g.size(); ++j) {
        const Mode& n = g.mode(j);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const Mode& m = g.mode(k);
            Mode r{n[0] - m[0], n[1] - m[1]};
            if (std::abs(r[0]) > N || std::abs(r[1]) > N) continue;
            std::size_t jr = g.index(r);
            VelocityVector gm = st.g.col(Eigen::Index(k)), gr = st.g.col(Eigen::Index(jr));
            // field at m acting on g at n-m
            for (int i = 0; i < g.dim(); ++i) {
                cplx e = cplx(0.0, m[std::size_t(i)]) * st.phi(Eigen::Index(k));
                out.col(Eigen::Index(j)) += e * (b.multiply_v(gr, i) - b.gradient_v(gr, i));
            }
            out.col(Eigen::Index(j)) += model.apply_Gamma(gm, gr, s.z()) / s.epsilon();
        }
    }
    return out;
}

double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

} // namespace

TEST_CASE("generator assembly", "[vpb]")
{
    Lab lab(6);
    const CollisionModel& model = lab.model();
    Eigen::MatrixXcd G0 = assemble_generator(model, 1.0, Eigen::Vector3d::Zero());
    CHECK((G0 + model.L().cast<cplx>()).cwiseAbs().maxCoeff() == 0.0);

    Eigen::Vector3d n(2, 0, 0);
    const double eps = 0.3;
    Eigen::MatrixXcd G = assemble_generator(model, eps, n);
    // on chi_0 only transport and field act: -(i/eps)(1 + 1/|n|^2) n v_1
    VelocityVector c0 = G * lab.basis().unit({0, 0, 0});
    VelocityVector expect = cplx(0, -(1.0 / eps) * (1.0 + 1.0 / 4.0) * 2.0) * lab.basis().unit({1, 0, 0});
    CHECK((c0 - expect).norm() < 1e-13);

    for (double e : {1.0, 0.1}) {
        for (Eigen::Vector3d m : {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(2, -1, 0), Eigen::Vector3d(0, 3, 0)}) {
            Eigen::MatrixXcd A = assemble_generator(model, e, m);
            Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(A);
            double scale = A.cwiseAbs().maxCoeff();
            CHECK(es.eigenvalues().real().maxCoeff() <= 1e-10 * scale);
        }
    }
}

TEST_CASE("poisson solve", "[vpb]")
{
    ModeGrid g(2, 2);
    Eigen::VectorXcd rho = Eigen::VectorXcd::Zero(Eigen::Index(g.size()));
    CHECK(poisson_solve(g, rho).cwiseAbs().maxCoeff() == 0.0);
    rho(Eigen::Index(g.index({1, 0}))) = 1.0;
    CHECK(std::abs(poisson_solve(g, rho)(Eigen::Index(g.index({1, 0}))) + 1.0) == 0.0);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (Eigen::Index i = 0; i < rho.size(); ++i) rho(i) = cplx(nd(rng), nd(rng));
    Eigen::VectorXcd phi = poisson_solve(g, rho);
    for (std::size_t j = 0; j < g.size(); ++j) {
        if (j == g.zero()) {
            CHECK(phi(Eigen::Index(j)) == cplx(0.0));
            continue;
        }
        CHECK(std::abs(g.norm2(j) * phi(Eigen::Index(j)) + rho(Eigen::Index(j))) < 1e-15 * (1 + std::abs(rho(Eigen::Index(j)))));
    }
}

TEST_CASE("nonlinear right-hand side", "[vpb]")
{
    Lab lab(4);
    for (int d : {1, 2}) {
        VpbSolver s(lab.model(), d, 2, 0.5, 1e-3, 0.0);
        KineticState zero = s.zero_state();
        CHECK(max_abs(s.nonlinear_rhs(zero)) == 0.0);

        // spatially uniform: no field, N = Gamma(g,g)/eps on the mean mode
        KineticState u = s.zero_state();
        std::mt19937_64 rng(9);
        std::normal_distribution<double> nd;
        for (Eigen::Index a = 0; a < u.g.rows(); ++a) u.g(a, Eigen::Index(s.grid().zero())) = nd(rng) * 0.1;
        s.finalize(u);
        auto [n1, n2] = s.nonlinear_parts(u);
        CHECK(max_abs(n1) == 0.0);
        VelocityVector g0 = u.g.col(Eigen::Index(s.grid().zero()));
        VelocityVector expect = lab.model().apply_Gamma(g0, g0) / 0.5;
        CHECK((n2.col(Eigen::Index(s.grid().zero())) - expect).norm() < 1e-13);

        KineticState r = random_state(s, 0.1, 5, 2, 4);
        auto [m1, m2] = s.nonlinear_parts(r);
        for (std::size_t j = 0; j < s.grid().size(); ++j)
            for (int k = 0; k < 5; ++k) CHECK(std::abs(lab.model().projection().chi(k).dot(m2.col(Eigen::Index(j)))) < 1e-13);
        Eigen::MatrixXcd oracle = convolution_rhs(s, r);
        CHECK(max_abs(m1 + m2 - oracle) < 1e-12);
    }
}

TEST_CASE("mode propagators", "[vpb]")
{
    Lab lab(6);
    VpbSolver s(lab.model(), 1, 3, 0.2, 0.01, 0.0, false);
    for (std::size_t k = 0; k < s.grid().half().size(); ++k) {
        const ModeSpectrum& sp = s.spectra()[k];
        CHECK(sp.reliable());
        Eigen::MatrixXcd ref = (0.37 * sp.G).exp();
        CHECK(max_abs(sp.exp(0.37) - ref) < 1e-10);
        // t phi_1(tG) against the augmented-matrix exponential
        ModeSpectrum forced = sp;
        forced.condition = std::numeric_limits<double>::infinity();
        CHECK(max_abs(sp.phi(0.05) - forced.phi(0.05)) < 1e-10);
        CHECK(max_abs(forced.exp(0.37) - ref) == 0.0);
    }
}

TEST_CASE("linear step is exact", "[vpb]")
{
    Lab lab(6);
    VpbSolver s(lab.model(), 1, 3, 0.5, 0.02, 0.0, false);
    KineticState st = random_state(s, 0.1, 1, 3, 4, false);
    KineticState a = st;
    for (int k = 0; k < 50; ++k) a = s.step(a);
    for (std::size_t j = 0; j < s.grid().size(); ++j) {
        Eigen::MatrixXcd G = assemble_generator(lab.model(), 0.5, mode_vector(s.grid().mode(j)));
        VelocityVector ref = (1.0 * G).exp() * st.g.col(Eigen::Index(j));
        CHECK((a.g.col(Eigen::Index(j)) - ref).norm() < 1e-10);
    }
    KineticState b = s.propagate_linear(st, 1.0);
    CHECK(max_abs(a.g - b.g) < 1e-10);
    CHECK(s.grid().reality_defect(a.g) < 1e-12);
    auto d = drift({s.check_conservation(st), s.check_conservation(a)});
    CHECK(d.mass < 1e-10);
    CHECK(d.momentum < 1e-10);
    CHECK(d.energy < 1e-10);
}

TEST_CASE("nonlinear invariants", "[vpb]")
{
    Lab lab(6);
    for (double eps : {1.0, 0.1}) {
        VpbSolver s(lab.model(), 1, 8, eps, 1e-3, 0.0, true);
        KineticState st = random_state(s, 0.002, 17, 2, 3);
        CHECK(s.mean_drift_check(st) < 1e-15);
        RunResult r = run(s, st, 1000, 100);
        ConservationDrift d = drift(r.ledger);
        INFO("eps " << eps << " drifts " << d.mass << " " << d.momentum << " " << d.energy);
        CHECK(d.mass < 1e-10);
        CHECK(d.momentum < 1e-10);
        CHECK(d.energy < 1e-6);
        double md = 0.0;
        for (const auto& snap : r.snapshots) {
            md = std::max(md, s.mean_drift_check(snap));
            CHECK(s.grid().reality_defect(snap.g) < 1e-12);
            Eigen::VectorXcd phi = poisson_solve(s.grid(), snap.g.row(0).transpose());
            CHECK(max_abs(phi - snap.phi) == 0.0);
        }
        CHECK(md < 1e-6);
        std::cout << "eps " << eps << " drift mass " << d.mass << " momentum " << d.momentum << " energy " << d.energy
                  << " mean residual " << md << "\n";
    }
}

TEST_CASE("zero data stays zero", "[vpb]")
{
    Lab lab(4);
    VpbSolver s(lab.model(), 1, 2, 0.1, 1e-3);
    KineticState z = s.zero_state();
    RunResult r = run(s, z, 10, 5);
    CHECK(max_abs(r.final.g) == 0.0);
    CHECK(s.mean_drift_check(r.final) == 0.0);
}

TEST_CASE("temporal order at least one", "[vpb]")
{
    Lab lab(4);
    auto final_state = [&](double dt) {
        VpbSolver s(lab.model(), 1, 3, 1.0, dt);
        KineticState st = random_state(s, 0.01, 4, 2, 3);
        return run(s, st, int(std::lround(0.2 / dt)), 1000).final;
    };
    KineticState a = final_state(0.02), b = final_state(0.01), c = final_state(0.005);
    double e1 = max_abs(a.g - b.g), e2 = max_abs(b.g - c.g);
    double ratio = e1 / e2;
    std::cout << "Richardson ratio " << ratio << "\n";
    CHECK(ratio > 1.8);
}

TEST_CASE("two-dimensional run conserves", "[vpb]")
{
    Lab lab(4);
    VpbSolver s(lab.model(), 2, 3, 0.5, 1e-3);
    KineticState st = random_state(s, 0.002, 6, 1, 3);
    RunResult r = run(s, st, 200, 50);
    ConservationDrift d = drift(r.ledger);
    CHECK(d.mass < 1e-10);
    CHECK(d.momentum < 1e-10);
    CHECK(d.energy < 1e-6);
    CHECK(s.grid().reality_defect(r.final.g) < 1e-12);
}

TEST_CASE("smoke run and empty horizon", "[vpb]")
{
    SimulationConfig c;
    c.epsilon = 0.5;
    c.dim = 1;
    c.modes = 8;
    c.degree = 6;
    c.T = 0.5;
    validate(c);
    auto t0 = std::chrono::steady_clock::now();
    Lab lab(c);
    VpbSolver s(lab.model(), c);
    KineticState st = random_state(s, c.amplitude, c.seed);
    RunResult r = run(s, st, c.step_count(), c.snapshot_stride());
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 30.0);
    CHECK(r.final.t == Catch::Approx(0.5));

    c.T = 0.0;
    CHECK(c.step_count() == 0);
    RunResult e = run(s, st, c.step_count(), 1);
    CHECK(max_abs(e.final.g - st.g) == 0.0);

    // restart from a mid-run state reproduces the continuation bit for bit
    RunResult first = run(s, st, 20, 10);
    RunResult cont = run(s, first.final, 20, 10);
    RunResult whole = run(s, st, 40, 10);
    CHECK(max_abs(cont.final.g - whole.final.g) == 0.0);
}

TEST_CASE("config validation names the field", "[vpb]")
{
    SimulationConfig c;
    c.epsilon = 0.0;
    try {
        validate(c);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "epsilon");
    }
    c.epsilon = 0.5;
    c.degree = 3;
    CHECK_THROWS_AS(validate(c), ValidationError);
}
