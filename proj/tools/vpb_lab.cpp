// vpb_lab: command-line front end of the diffusive-limit lab.
// Exit codes: 0 success, 2 invalid input (flags, config, output collision), 3 numerical failure.

#include <vpb/hypocoercivity.hpp>
#include <vpb/io.hpp>
#include <vpb/limit_lab.hpp>
#include <vpb/nsfp.hpp>
#include <vpb/parallel.hpp>
#include <vpb/spectral.hpp>
#include <vpb/uq.hpp>
#include <vpb/vpb_solver.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <iostream>
#include <map>
#include <string>

#ifndef VPB_VERSION
#define VPB_VERSION "unknown"
#endif

using namespace vpb;
using json = nlohmann::json;

namespace {

struct Common {
    std::string config = "default", profile = "full", out_dir = "vpb_out";
    bool overwrite = false;
    std::map<std::string, std::string> overrides; // config key -> raw flag value
};

/// Flags shared by every subcommand; values are applied through the config schema so that
/// errors name the offending field.
void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config, "key = value config file, or 'default'");
    sub->add_option("--profile", c.profile, "smoke or full")->check(CLI::IsMember({"smoke", "full"}));
    sub->add_option("--out-dir", c.out_dir, "output directory");
    sub->add_flag("--overwrite", c.overwrite, "reuse an output directory that already holds a manifest");
    const std::pair<const char*, const char*> keyed[] = {
        {"--epsilon", "epsilon"}, {"--eps-list", "eps_list"}, {"--modes", "modes"}, {"--degree", "degree"}, {"--dt", "dt"},
        {"--T", "T"},             {"--nodes", "nodes"},       {"--seed", "seed"},   {"--smax", "s_max"},    {"--s-points", "s_points"},
        {"--eta", "eta"},         {"--dim", "dim"},           {"--z", "z"},         {"--amplitude", "amplitude"},
        {"--initial", "initial"}, {"--nonlinear", "nonlinear"}, {"--ell", "ell"},   {"--regularity", "regularity"},
    };
    for (auto [flag, key] : keyed) {
        std::string k = key;
        sub->add_option_function<std::string>(flag, [&c, k](const std::string& v) { c.overrides[k] = v; }, "sets config key " + k);
    }
}

LabConfig assemble(const Common& cm, LabConfig base)
{
    LabConfig c = base;
    if (cm.config != "default") c = read_config_file(cm.config, c);
    for (const auto& [k, v] : cm.overrides) set_key(c, k, v);
    return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json base_manifest(const std::string& command, const LabConfig& c, const std::vector<std::string>& argv)
{
    json m;
    m["command"] = command;
    m["argv"] = argv;
    m["version"] = VPB_VERSION;
    m["config"] = serialize_config(c);
    m["config_fnv1a64"] = fnv1a64(serialize_config(c));
    m["seed"] = c.seed;
    m["workers"] = worker_count();
    return m;
}

void cmd_simulate(const LabConfig& c, OutputDir& out, json& m)
{
    SimulationConfig sc = to_simulation(c);
    Lab lab(sc);
    VpbSolver solver(lab.model(), sc.dim, sc.modes, sc.epsilon, sc.effective_dt(), sc.z, sc.nonlinear);
    KineticState s0 = sc.initial == "random"              ? random_state(solver, sc.amplitude, sc.seed, 2, 3, sc.nonlinear)
                      : sc.initial == "kinetic_perturbed" ? prepare_initial(solver, InitialKind::kinetic_perturbed, sc.amplitude, sc.seed)
                                                          : prepare_initial(solver, InitialKind::well_prepared, sc.amplitude, sc.seed);
    RunResult r = run(solver, s0, sc.step_count(), sc.snapshot_stride());

    CsvTable t({"t", "mass", "momentum_1", "momentum_2", "momentum_3", "energy", "field_energy", "l2_norm"});
    for (const KineticState& s : r.snapshots) {
        ConservationEntry e = solver.check_conservation(s);
        t.add({s.t, e.mass, e.momentum[0], e.momentum[1], e.momentum[2], e.energy, solver.field_energy(s), std::sqrt(s.g.squaredNorm())});
    }
    out.write("energy.csv", t.str());
    out.write("final_state.csv", state_table(solver.grid(), r.final).str());
    ConservationDrift d = drift(r.ledger);
    m["dt"] = sc.effective_dt();
    m["steps"] = sc.step_count();
    m["drift"] = {{"mass", d.mass}, {"momentum", d.momentum}, {"energy", d.energy}};
}

void cmd_spectrum(const LabConfig& c, OutputDir& out, json& m)
{
    if (!(c.epsilon > 0.0 && c.epsilon <= 1.0)) throw ValidationError("epsilon", "must lie in (0, 1]");
    if (!(c.s_max > 0.0)) throw ValidationError("smax", "must be positive");
    if (c.s_points < 2) throw ValidationError("s_points", "must be >= 2");
    Lab lab(c.degree, c.pure_relaxation ? Relaxation::pure : Relaxation::multiplier, c.eta);
    RadiusScan rs = choose_r0(lab.model(), c.epsilon);
    if (c.s_max > rs.r0) throw ValidationError("smax", "exceeds the five-branch radius r0 = " + format_double(rs.r0));
    std::vector<double> grid = log_grid(1e-2 * c.s_max, c.s_max, c.s_points);
    BranchScan scan = eigen_branches(lab.model(), c.epsilon, grid, -0.5, 0.1 * c.s_max);
    out.write("branches.csv", branch_table(c.epsilon, scan).str());
    ExpansionCoefficients ex = expansion_coefficients(lab.model(), c.epsilon);
    auto cj = [](cplx z) { return json::array({z.real(), z.imag()}); };
    m["r0"] = rs.r0;
    m["max_real"] = scan.max_real;
    m["expansion"] = {{"minus", cj(ex.minus)}, {"zero", cj(ex.zero)}, {"plus", cj(ex.plus)}, {"transverse", cj(ex.transverse)}};
}

void cmd_limit(const LabConfig& c, OutputDir& out, json& m)
{
    ExperimentPlan plan = to_plan(c);
    Lab lab(plan.degree, c.pure_relaxation ? Relaxation::pure : Relaxation::multiplier, c.eta);
    std::vector<SweepRow> rows = run_sweep(lab.model(), plan);
    out.write("limit.csv", limit_table(rows).str());
    if (rows.size() >= 2) {
        std::vector<double> err, perp;
        for (const auto& r : rows) {
            err.push_back(r.err.integrated_err);
            perp.push_back(r.perp_budget);
        }
        RateFit fe = rate_fit(plan.epsilons, err), fp = rate_fit(plan.epsilons, perp);
        m["rates"] = {{"integrated_err", {{"slope", fe.slope}, {"residual", fe.residual}, {"eps_log_eps_residual", fe.residual_log}}},
                      {"perp_budget", {{"slope", fp.slope}, {"residual", fp.residual}}}};
    }
}

void cmd_uq(const LabConfig& c, OutputDir& out, json& m)
{
    UqConfig u = to_uq(c);
    Lab lab(u.degree, Relaxation::multiplier, u.eta);
    QuadratureGrid q = build_grid(c.nodes);
    EnsembleResult e = ensemble_run(lab.model(), u, q, default_family(u));
    ModeGrid grid(u.dim, u.modes);
    std::vector<double> dz;
    bool runge = false;
    if (q.size() >= 5) {
        SensitivityField f = z_derivative(e, grid, u.regularity);
        dz = f.l2;
        runge = f.runge_flag;
    }
    CsvTable t({"t", "l2_z", "sup_z", "mixed", "dz_l2"});
    for (std::size_t i = 0; i < e.t.size(); ++i) t.add({e.t[i], e.l2[i], e.sup[i], e.mixed[i], dz.empty() ? std::nan("") : dz[i]});
    out.write("uq_norms.csv", t.str());

    json nodes = json::array();
    for (std::size_t k = 0; k < q.size(); ++k) {
        LabConfig node = c;
        node.z = q.nodes[k];
        nodes.push_back({{"z", q.nodes[k]}, {"weight", q.weights[k]}, {"config_fnv1a64", fnv1a64(serialize_config(node))}});
    }
    m["nodes"] = nodes;
    m["runge_flag"] = runge;
    try {
        DecayFit f = fit_decay(e.t, e.mixed, e.t.back() / 4.0);
        m["mixed_decay"] = {{"rate", f.rate}, {"amplitude", f.amplitude}, {"residual", f.residual}};
    } catch (const std::invalid_argument&) {
        m["mixed_decay"] = nullptr; // too few snapshots past the transient
    }
}

void cmd_energy(const LabConfig& c, OutputDir& out, json& m)
{
    SimulationConfig sc = to_simulation(c);
    Lab lab(sc);
    VelocityForms vf(lab.basis());
    EnergyLedger measured = measure_constants(lab.model());
    Selection sel = select_coefficients(measured, sc.epsilon);
    if (!sel.feasible) throw NumericalError("coefficient selection infeasible: " + sel.failure);
    VpbSolver solver(lab.model(), sc.dim, sc.modes, sc.epsilon, sc.effective_dt(), sc.z, sc.nonlinear);
    KineticState s0 = random_state(solver, sc.amplitude, sc.seed, 2, 3, sc.nonlinear);
    const int s = std::max(1, c.regularity);
    CsvTable t({"t", "e1", "e21", "e22", "total", "plain"});
    std::vector<double> tt, E;
    RunResult r = run(solver, s0, sc.step_count(), sc.snapshot_stride());
    for (const KineticState& x : r.snapshots) {
        EnergyValue v = energy_functional(solver.grid(), vf, sc.epsilon, x, sel.ledger, s);
        t.add({x.t, v.e1, v.e21, v.e22, v.total(), v.plain});
        tt.push_back(x.t);
        E.push_back(v.total());
    }
    out.write("energy_report.csv", t.str());
    out.write("ledger.json", ledger_json(sel.ledger).dump(2) + "\n");
    m["ledger"] = ledger_json(sel.ledger);
    m["min_slack"] = sel.min_slack;
    try {
        DecayFit f = fit_decay(tt, E, tt.back() / 4.0);
        m["decay"] = {{"rate", f.rate}, {"residual", f.residual}, {"monotone", f.monotone}};
    } catch (const std::invalid_argument&) {
        m["decay"] = nullptr;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Vlasov-Poisson-Boltzmann diffusive-limit lab"};
    app.require_subcommand(1);
    std::vector<std::string> args(argv, argv + argc);

    using Runner = void (*)(const LabConfig&, OutputDir&, json&);
    struct Sub {
        const char* name;
        const char* help;
        Runner run;
        Common common;
        CLI::App* app = nullptr;
    };
    std::vector<Sub> subs{
        {"simulate", "run the kinetic model and record conserved quantities", cmd_simulate, {}},
        {"spectrum", "eigenvalue branches of the linearized operator", cmd_spectrum, {}},
        {"limit-sweep", "eps-sweep against the fluid reference", cmd_limit, {}},
        {"uq", "collocation ensemble over the random kernel", cmd_uq, {}},
        {"energy-report", "hypocoercive functional along a run", cmd_energy, {}},
    };
    for (Sub& s : subs) {
        s.app = app.add_subcommand(s.name, s.help);
        add_common(s.app, s.common);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    for (Sub& s : subs) {
        if (!s.app->parsed()) continue;
        try {
            LabConfig base = profile_defaults(s.common.profile);
            if (std::string(s.name) == "uq") {
                base.eta = 0.2;
                base.degree = 4;
                base.modes = 4;
                base.dt = 4e-3;
                if (s.common.profile == "full") base.T = 8.0;
                base.regularity = 2;
            }
            LabConfig c = assemble(s.common, base);
            auto t0 = std::chrono::steady_clock::now();
            OutputDir out(s.common.out_dir, s.common.overwrite);
            json m = base_manifest(s.name, c, args);
            s.run(c, out, m);
            m["wall_seconds"] = seconds_since(t0);
            out.finish(m);
            std::cout << s.name << ": wrote " << out.path().string() << "/manifest.json\n";
            return 0;
        } catch (const ValidationError& e) {
            std::cerr << "invalid input: " << e.what() << "\n";
            return 2;
        } catch (const IoError& e) {
            std::cerr << "io error: " << e.what() << "\n";
            return 2;
        } catch (const NumericalError& e) {
            std::cerr << "numerical failure: " << e.what() << "\n";
            return 3;
        } catch (const BranchCountError& e) {
            std::cerr << "numerical failure: " << e.what() << "\n";
            return 3;
        } catch (const std::exception& e) {
            std::cerr << "numerical failure: " << e.what() << "\n";
            return 3;
        }
    }
    return 2;
}
