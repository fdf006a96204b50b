// Acceptance run: one PASS/FAIL line per criterion, each with its measured numbers and runtime.
// Exit status is the number of failed criteria.

#include <vpb/collision.hpp>
#include <vpb/hypocoercivity.hpp>
#include <vpb/limit_lab.hpp>
#include <vpb/nsfp.hpp>
#include <vpb/spectral.hpp>
#include <vpb/uq.hpp>
#include <vpb/vpb_solver.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace vpb;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void criterion(int id, const char* title, double budget_s, const std::function<void(Outcome&)>& body)
{
    Outcome o;
    o.detail.precision(4);
    auto t0 = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail << " [exception: " << e.what() << "]";
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget_s > 0.0 && secs > budget_s) {
        o.pass = false;
        o.detail << " [runtime over budget]";
    }
    if (!o.pass) ++failures;
    std::printf("CRITERION %2d %s: %s |%s | %.1f s", id, o.pass ? "PASS" : "FAIL", title, o.detail.str().c_str(), secs);
    if (budget_s > 0.0) std::printf(" (budget %.0f s)", budget_s);
    std::printf("\n");
    std::fflush(stdout);
}

VelocityVector random_vector(Eigen::Index n, std::mt19937_64& rng)
{
    std::normal_distribution<double> nd;
    VelocityVector x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = cplx(nd(rng), nd(rng));
    return x;
}

double spread(const std::vector<double>& r)
{
    return *std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end());
}

} // namespace

int main()
{
    criterion(1, "<Lg,g> = ||g_perp||^2_Lambda, a2 = 1", 5.0, [](Outcome& o) {
        Lab lab(8);
        const CollisionModel& m = lab.model();
        std::mt19937_64 rng(2024);
        double worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            VelocityVector g = random_vector(Eigen::Index(lab.basis().size()), rng);
            double lhs = g.dot(m.L() * g).real();
            double rhs = std::pow(lab.basis().lambda_norm(m.projection().perp(g)), 2);
            worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + rhs));
        }
        double a2 = measure_a2(m);
        o.detail << " K=8, 100 samples, max rel dev " << worst << ", a2 " << a2;
        o.require(worst <= 1e-10, "identity to 1e-10");
        o.require(std::abs(a2 - 1.0) <= 1e-10, "a2 = 1");
    });

    criterion(2, "assumption suite (mixing, defect of coercivity, bilinear)", 30.0, [](Outcome& o) {
        Lab lab(6);
        const CollisionModel& m = lab.model();
        double c1 = mixing_constant(m, 0.1), c2 = mixing_constant(m, 0.01);
        DefectPair p = select_defect_pair(defect_curve(m));
        BilinearBound bb = measure_bilinear_bound(m, 200);
        o.detail << " C_0.1 " << c1 << ", C_0.01 " << c2 << ", a3 " << p.a3 << ", a4 " << p.a4 << ", C_Gamma " << bb.C << ", kernel leak " << bb.kernel_leak;
        o.require(std::isfinite(c1) && std::isfinite(c2), "finite mixing constants");
        o.require(p.a3 > 0.0, "a3 > 0");
        o.require(std::isfinite(bb.C), "finite bilinear constant");
        o.require(bb.kernel_leak <= 1e-12, "Gamma orthogonal to Ker L");
    });

    criterion(3, "conservation in nonlinear runs", 120.0, [](Outcome& o) {
        Lab lab(6);
        for (double eps : {1.0, 0.1}) {
            VpbSolver s(lab.model(), 1, 8, eps, 1e-3, 0.0, true);
            KineticState st = random_state(s, 0.002, 17, 2, 3);
            ConservationDrift d = drift(run(s, st, 1000, 1000).ledger);
            o.detail << " eps " << eps << ": mass " << d.mass << " momentum " << d.momentum << " energy " << d.energy << ";";
            o.require(d.mass < 1e-8 && d.momentum < 1e-8, "mass/momentum drift < 1e-8");
            o.require(d.energy < 1e-6, "energy drift < 1e-6");
        }
    });

    criterion(4, "spectrum near the origin, branch count, dispersion roots", 120.0, [](Outcome& o) {
        Lab lab(6);
        const CollisionModel& m = lab.model();
        double worst0 = 0.0, worst_disp = 0.0;
        for (double eps : {1.0, 0.5, 0.1}) {
            FullSpectrum sp = decompose(assemble_B(m, eps, Eigen::Vector3d(1e-6, 0, 0)));
            std::vector<cplx> lo;
            for (Eigen::Index k = 0; k < sp.lambda.size(); ++k)
                if (sp.lambda(k).real() > -0.5) lo.push_back(sp.lambda(k));
            o.require(lo.size() == 5, "five eigenvalues near the origin");
            std::sort(lo.begin(), lo.end(), [](cplx a, cplx b) { return a.imag() < b.imag(); });
            const cplx expect[5] = {cplx(0, -eps), 0.0, 0.0, 0.0, cplx(0, eps)};
            for (std::size_t k = 0; k < std::min<std::size_t>(5, lo.size()); ++k) worst0 = std::max(worst0, std::abs(lo[k] - expect[k]));

            RadiusScan rs = choose_r0(m, eps);
            o.require(rs.r0 > 0.0, "r0 > 0");
            for (std::size_t k = 0; k < rs.s.size(); ++k)
                if (rs.s[k] <= rs.r0) o.require(rs.counts[k] == 5, "five branches on (0, r0]");
            std::array<cplx, 3> seeds{cplx(0, -eps), 0.0, cplx(0, eps)};
            for (double s : log_grid(1e-3, rs.r0, 15)) {
                DispersionRoots r = dispersion_roots(m, eps, s, &seeds);
                seeds = r.lambda;
                LowModes lm = projections(m, eps, Eigen::Vector3d(s, 0, 0));
                for (std::size_t j = 0; j < 3; ++j) worst_disp = std::max(worst_disp, std::abs(r.lambda[j] - lm.lambda[j]));
            }
            o.detail << " eps " << eps << " r0 " << rs.r0 << ";";
        }
        o.detail << " max |lambda(1e-6) - {0,0,0,+-i eps}| " << worst0 << ", max dispersion-vs-dense " << worst_disp;
        o.require(worst0 <= 1e-10, "origin eigenvalues to 1e-10");
        o.require(worst_disp <= 1e-6, "dispersion roots to 1e-6");
    });

    criterion(5, "high-frequency decay of S2", 120.0, [](Outcome& o) {
        Lab lab(6);
        for (double eps : {1.0, 0.1}) {
            RadiusScan rs = choose_r0(lab.model(), eps);
            HighFrequencyFit f = fit_high_frequency(lab.model(), eps, rs.r0, 1e-2, 10.0, 10.0, 24, 20);
            o.detail << " eps " << eps << ": sigma " << f.sigma << " C " << f.C << " max violation " << f.max_violation << " on "
                     << f.check_samples.size() << " points;";
            o.require(f.sigma > 0.0, "sigma > 0");
            o.require(f.check_samples.size() == 400, "20x20 grid");
            o.require(f.max_violation < 1e-6, "violation < 1e-6");
        }
    });

    criterion(6, "uniform-in-eps decay of the functional (linear runs)", 300.0, [](Outcome& o) {
        Lab lab(6);
        VelocityForms vf(lab.basis());
        EnergyLedger meas = measure_constants(lab.model());
        std::vector<double> rates;
        for (double eps : {1.0, 0.5, 0.1, 0.01}) {
            EnergyLedger l = select_coefficients(meas, eps).ledger;
            VpbSolver s(lab.model(), 1, 4, eps, 0.1, 0.0, false);
            KineticState x = random_state(s, 0.01, 3, 2, 3, false);
            std::vector<double> t, E;
            for (int k = 0; k <= 150; ++k) {
                t.push_back(x.t);
                E.push_back(energy_functional(s.grid(), vf, eps, x, l, 1).total());
                x = s.step(x);
            }
            DecayFit f = fit_decay(t, E, 3.0);
            rates.push_back(f.rate);
            o.detail << " eps " << eps << " rate " << f.rate << ";";
            o.require(f.rate > 0.0, "positive rate");
        }
        o.detail << " max/min " << spread(rates);
        o.require(spread(rates) <= 2.0, "rates within a factor 2");
    });

    criterion(7, "lambda-selection feasible with slack >= delta/2", 0.0, [](Outcome& o) {
        Lab lab(6);
        EnergyLedger meas = measure_constants(lab.model());
        for (double eps : {1.0, 0.1, 0.01}) {
            Selection s = select_coefficients(meas, eps);
            o.detail << " eps " << eps << ": feasible " << s.feasible << " slack " << s.min_slack << " (delta/2 " << 0.5 * s.ledger.delta << ");";
            o.require(s.feasible, "feasible at eps " + std::to_string(eps) + " " + s.failure);
            o.require(s.min_slack >= 0.5 * s.ledger.delta - 1e-12, "slack >= delta/2");
        }
    });

    // criteria 8 and 10 share the nonlinear sweep
    Lab lab6(6);
    ExperimentPlan plan; // d=1, N=8, K=6, dt=1e-3, T=4, eps {0.2, 0.1, 0.05, 0.025}, s=2, ell=0, well-prepared
    std::vector<SweepRow> sweep;
    double sweep_seconds = 0.0;
    {
        auto t0 = std::chrono::steady_clock::now();
        try {
            sweep = run_sweep(lab6.model(), plan);
        } catch (const std::exception& e) {
            std::printf("nonlinear sweep failed: %s\n", e.what());
        }
        sweep_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    auto column = [](const std::vector<SweepRow>& rows, auto pick) {
        std::vector<double> v;
        for (const auto& r : rows) v.push_back(pick(r));
        return v;
    };

    criterion(8, "nonlinear convergence rate of the integrated error", 900.0, [&](Outcome& o) {
        if (sweep.size() != plan.epsilons.size()) throw NumericalError("sweep incomplete");
        std::vector<double> err = column(sweep, [](const SweepRow& r) { return r.err.integrated_err; });
        RateFit f = rate_fit(plan.epsilons, err);
        o.detail << " errors";
        for (double e : err) o.detail << " " << e;
        o.detail << "; slope " << f.slope << ", power-law residual " << f.residual << ", eps|ln eps| residual " << f.residual_log
                 << "; sweep " << sweep_seconds << " s";
        o.require(f.slope >= 0.7 && f.slope <= 1.3, "slope in [0.7, 1.3]");
        o.require(f.residual_log < f.residual, "eps|ln eps| residual below power-law residual");
        if (sweep_seconds > 900.0) o.require(false, "sweep runtime");
    });

    criterion(9, "linear well-prepared rate", 900.0, [&](Outcome& o) {
        ExperimentPlan lin = plan;
        lin.nonlinear = false;
        std::vector<SweepRow> rows = run_sweep(lab6.model(), lin);
        std::vector<double> err = column(rows, [](const SweepRow& r) { return r.err.integrated_err; });
        RateFit f = rate_fit(lin.epsilons, err);
        o.detail << " errors";
        for (double e : err) o.detail << " " << e;
        o.detail << "; slope " << f.slope;
        o.require(std::abs(f.slope - 2.0) <= 0.4, "slope 2.0 +- 0.4");
    });

    criterion(10, "perp budget scaling", 0.0, [&](Outcome& o) {
        if (sweep.size() != plan.epsilons.size()) throw NumericalError("sweep incomplete");
        std::vector<double> perp = column(sweep, [](const SweepRow& r) { return r.perp_budget; });
        RateFit f = rate_fit(plan.epsilons, perp);
        o.detail << " budgets";
        for (double e : perp) o.detail << " " << e;
        o.detail << "; slope " << f.slope;
        o.require(std::abs(f.slope - 2.0) <= 0.4, "slope 2.0 +- 0.4");
    });

    criterion(11, "NSFP: divergence, constraint, viscous decay", 0.0, [](Outcome& o) {
        Lab lab(4);
        FluidCoefficients c = fluid_coefficients(lab.model());
        NsfpSolver solver(2, 6, c, 1e-3);
        const ModeGrid& g = solver.grid();
        std::mt19937_64 rng(4);
        std::normal_distribution<double> nd;
        FluidState s = solver.zero_state();
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (g.norm2(j) == 0.0 || std::max(std::abs(g.mode(j)[0]), std::abs(g.mode(j)[1])) > 3) continue;
            for (int i = 0; i < 3; ++i) s.u(i, Eigen::Index(j)) = 0.3 * cplx(nd(rng), nd(rng));
            s.sigma(Eigen::Index(j)) = 0.3 * cplx(nd(rng), nd(rng));
        }
        s.u = leray_project(g, s.u);
        g.enforce_reality(s.u);
        Eigen::MatrixXcd row = s.sigma.transpose();
        g.enforce_reality(row);
        s.sigma = row.transpose();
        double div = 0.0, con = 0.0;
        for (int k = 0; k < 1000; ++k) {
            solver.step(s);
            div = std::max(div, divergence_defect(g, s.u));
            FluidFields f = recover_rho_theta(g, s.sigma);
            con = std::max(con, constraint_residual(g, f.rho, f.theta));
        }
        // single shear mode u_2 = a cos(2 x_1)
        FluidState m = solver.zero_state();
        const Eigen::Index jp = Eigen::Index(g.index({2, 0})), jm = Eigen::Index(g.index({-2, 0}));
        m.u(1, jp) = m.u(1, jm) = 0.05;
        for (int k = 0; k < 1000; ++k) solver.step(m);
        double expect = 0.05 * std::exp(-c.nu * 4.0 * m.t);
        double rel = std::abs(m.u(1, jp).real() - expect) / expect;
        o.detail << " max div " << div << ", max constraint residual " << con << ", viscous decay rel. error " << rel;
        o.require(div < 1e-12, "div-free to 1e-12");
        o.require(con < 1e-10, "constraint < 1e-10");
        o.require(rel < 0.01, "viscous decay within 1%");
    });

    criterion(12, "UQ ensemble decay, stability, node refinement", 900.0, [](Outcome& o) {
        Lab lab(4, Relaxation::multiplier, 0.2);
        std::vector<double> rates, stab;
        double refine = 0.0;
        for (double eps : {1.0, 0.1}) {
            UqConfig c;
            c.epsilon = eps;
            c.T = 8.0;
            c.dt = 4e-3;
            c.eta = 0.2;
            EnsembleResult e = ensemble_run(lab.model(), c, build_grid(9), default_family(c));
            DecayFit f = fit_decay(e.t, e.mixed, c.T / 4.0);
            rates.push_back(f.rate);

            EnsembleResult e8 = ensemble_run(lab.model(), c, build_grid(8), default_family(c));
            EnsembleResult e16 = ensemble_run(lab.model(), c, build_grid(16), default_family(c));
            double rel = 0.0;
            for (std::size_t i = 0; i < e8.t.size(); ++i) rel = std::max(rel, std::abs(e8.mixed[i] - e16.mixed[i]) / e16.mixed[i]);
            refine = std::max(refine, rel);

            UqConfig bump = c;
            bump.seed = 9;
            bump.amplitude = 1e-5;
            InitialFamily base = default_family(c), extra = default_family(bump);
            InitialFamily perturbed = [&](const VpbSolver& s, double z) {
                KineticState a = base(s, z);
                a.g += extra(s, z).g;
                impose_mean_constraint(s, a, s.nonlinear());
                return a;
            };
            StabilityReport st = stability_experiment(lab.model(), c, build_grid(9), base, perturbed);
            stab.push_back(st.rate);
            o.detail << " eps " << eps << ": mixed-norm rate " << f.rate << ", contraction rate " << st.rate << ";";
            o.require(f.rate > 0.0, "positive mixed-norm rate");
            o.require(st.rate > 0.0, "positive contraction rate");
        }
        o.detail << " rate ratio " << spread(rates) << ", 8->16 node change " << refine;
        o.require(spread(rates) <= 2.0, "rates within a factor 2");
        o.require(refine < 0.01, "refinement change < 1%");
    });

    std::printf("%d criteria failed\n", failures);
    return failures;
}
