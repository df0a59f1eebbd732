#include "ktraffic/app/commands.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../format.hpp"
#include "ktraffic/equilibrium.hpp"
#include "ktraffic/errors.hpp"
#include "ktraffic/macroscopics.hpp"
#include "ktraffic/parallel.hpp"
#include "ktraffic/tensor.hpp"

namespace ktraffic::app {

using nlohmann::json;
using detail::fmt17;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Short, filename-safe rendering of a parameter value.
std::string tag(double x) {
    std::ostringstream s;
    s << x;
    std::string out = s.str();
    for (char& c : out)
        if (c == '.') c = 'p';
    return out;
}

std::string sanitize(const std::string& label) {
    std::string out;
    for (char c : label) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out;
}

json integrator_json(const IntegratorControls& c) {
    return {{"method", c.stepper == Stepper::Rk4 ? "rk4" : "dopri5"},
            {"step", c.step},
            {"rtol", c.rtol},
            {"atol", c.atol},
            {"min_step", c.min_step},
            {"sample_interval", c.sample_interval},
            {"geometric_ratio", c.geometric_ratio},
            {"negative_tol", c.negative_tol}};
}

json steady_json(const SteadyStateControls& c) {
    return {{"residual_tol", c.residual_tol},
            {"change_tol", c.change_tol},
            {"t_max", c.t_max},
            {"integrator", integrator_json(c.integrator)}};
}

json law_json(const ProbabilityLaw& law) {
    if (law.is_power()) return {{"gamma", law.gamma()}};
    json pts = json::array();
    for (const auto& [x, p] : law.points()) pts.push_back({x, p});
    return {{"table", pts}};
}

json provenance(const ModelParams& p, const ProbabilityLaw& law, std::optional<double> r, std::optional<double> rho) {
    json j = {{"kernel", std::string(to_string(p.kernel))},
              {"T", p.whole_classes() ? json(p.speed_classes()) : json(p.jump_ratio())},
              {"delta_v", p.delta_v},
              {"v_max", p.v_max},
              {"rho_max", p.rho_max},
              {"eta", p.eta},
              {"law", law_json(law)}};
    j["r"] = r ? json(*r) : json("inf");
    if (rho) j["rho"] = *rho;
    return j;
}

ModelParams with_T(ModelParams p, int T) {
    p.delta_v = p.v_max / T;
    p.validate();
    return p;
}

// Collects outputs and writes the manifest once the command finishes.
class Run {
public:
    Run(const RunConfig& cfg, std::string command)
        : cfg_(cfg), command_(std::move(command)), started_(utc_now()), t0_(std::chrono::steady_clock::now()) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.out_dir, ec);
        if (ec) throw IoError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
    }

    std::string path(const std::string& suffix) const { return cfg_.prefix + "_" + suffix; }

    void write(const std::string& name, const std::string& content, json entry) {
        const auto full = std::filesystem::path(cfg_.out_dir) / name;
        std::ofstream out(full, std::ios::binary);
        if (!out) throw IoError("cannot open '" + full.string() + "' for writing");
        out << content;
        out.close();
        if (!out) throw IoError("failed writing '" + full.string() + "'");
        entry["file"] = name;
        outputs_.push_back(std::move(entry));
    }

    void note(std::string s) { notes_.push_back(std::move(s)); }
    void warn(const std::string& s) { warnings_.push_back(s); }

    json finish(json summary = json::object()) {
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        json m = {{"schema", "ktraffic-manifest/1"},
                  {"tool", {{"name", "ktraffic"}, {"version", kVersion}}},
                  {"command", command_},
                  {"started_utc", started_},
                  {"finished_utc", utc_now()},
                  {"wall_time_s", wall},
                  {"config", cfg_.source},
                  {"provenance",
                   {{"model", provenance(cfg_.params, cfg_.law, std::nullopt, std::nullopt)},
                    {"integrator", integrator_json(cfg_.integrator)},
                    {"t_end", cfg_.t_end},
                    {"steady_state", steady_json(cfg_.steady)}}},
                  {"outputs", outputs_},
                  {"notes", notes_},
                  {"warnings", warnings_}};
        m["provenance"]["model"].erase("r");
        if (!summary.empty()) m["summary"] = std::move(summary);
        const auto full = std::filesystem::path(cfg_.out_dir) / path("manifest.json");
        std::ofstream out(full, std::ios::binary);
        if (!out) throw IoError("cannot open '" + full.string() + "' for writing");
        out << m.dump(2) << '\n';
        if (!out) throw IoError("failed writing '" + full.string() + "'");
        return m;
    }

private:
    const RunConfig& cfg_;
    std::string command_;
    std::string started_;
    std::chrono::steady_clock::time_point t0_;
    json outputs_ = json::array();
    json notes_ = json::array();
    json warnings_ = json::array();
};

struct Setup {
    VelocityGrid grid;
    GridRatio ratio;
    double P;
    InteractionTensor tensor;
};

Setup setup(const ModelParams& params, const ProbabilityLaw& law, double r, double rho) {
    auto grid = build_grid(params, r);
    const auto ratio = grid_ratio(params, grid);
    const double P = evaluate_probability(law, rho, params);
    auto tensor = build_tensor(params.kernel, grid, ratio, P);
    return {std::move(grid), ratio, P, std::move(tensor)};
}

std::vector<double> list_or(const std::vector<double>& v, double fallback) {
    return v.empty() ? std::vector<double>{fallback} : v;
}

}  // namespace

json run_simulate(const RunConfig& cfg) {
    Run run(cfg, "simulate");
    const double r = cfg.grid.ratio(cfg.params);
    const auto s = setup(cfg.params, cfg.law, r, cfg.rho);
    json summary = json::array();
    for (std::size_t i = 0; i < cfg.initial.size(); ++i) {
        const auto& ic = cfg.initial[i];
        const auto f0 = make_initial(ic, cfg, s.grid, s.P);
        const auto traj = integrate(f0, s.tensor, cfg.params.eta, cfg.t_end, cfg.integrator);
        std::ostringstream csv;
        write_trajectory_csv(csv, traj, s.grid, s.tensor, cfg.params.eta);
        const auto name = cfg.initial.size() == 1
                              ? run.path("trajectory.csv")
                              : run.path("trajectory_" + std::to_string(i + 1) + "_" + sanitize(ic.label) + ".csv");
        const auto m = moments(traj.states.back(), s.grid);
        json entry = {{"kind", "trajectory"},
                      {"initial", ic.label},
                      {"provenance", provenance(cfg.params, cfg.law, r, cfg.rho)},
                      {"N", s.grid.size()},
                      {"P", s.P},
                      {"terminal_time", traj.times.back()},
                      {"terminal_residual", traj.terminal_residual},
                      {"terminal_mean_speed", m.mean_speed},
                      {"max_mass_drift", traj.max_mass_drift},
                      {"min_component", traj.min_component},
                      {"clamped", traj.clamped},
                      {"steps", traj.steps}};
        entry["provenance"]["integrator"] = integrator_json(cfg.integrator);
        entry["provenance"]["t_end"] = cfg.t_end;
        if (traj.clamped > 0)
            run.warn(name + ": " + std::to_string(traj.clamped) + " components clamped to zero (min " +
                     fmt17(traj.min_component) + ")");
        run.write(name, csv.str(), entry);
        summary.push_back({{"initial", ic.label}, {"terminal_residual", traj.terminal_residual}});
    }
    if (cfg.rho == 0.0) run.note("empty road: the trajectory is identically zero");
    return run.finish({{"trajectories", summary}});
}

json run_equilibrium(const RunConfig& cfg) {
    Run run(cfg, "equilibrium");
    const int T = cfg.params.speed_classes();
    const auto rs = list_or(cfg.r_values, cfg.grid.ratio(cfg.params));
    const auto& ic = cfg.initial.front();
    json summary = json::array();
    bool any_without_oracle = false;
    for (double r : rs) {
        const auto s = setup(cfg.params, cfg.law, r, cfg.rho);
        const auto f0 = make_initial(ic, cfg, s.grid, s.P);
        const auto ss = find_steady_state(f0, s.tensor, cfg.params.eta, cfg.steady);
        const bool oracle = cfg.params.kernel == Kernel::Delta && s.ratio.integer;
        any_without_oracle = any_without_oracle || !oracle;

        std::optional<QuantizedEquilibrium> eq;
        CellMassVector exact;
        if (oracle) {
            eq = closed_form_equilibrium(cfg.rho, s.P, T);
            exact = equilibrium_on_grid(*eq, s.ratio.as_integer());
        }
        std::ostringstream csv;
        csv << (oracle ? "cell,speed,oracle,ode,difference\n" : "cell,speed,ode\n");
        double max_diff = 0.0;
        for (std::size_t j = 0; j < s.grid.size(); ++j) {
            csv << j + 1 << ',' << fmt17(s.grid.center(j));
            if (oracle) {
                const double d = ss.state[j] - exact[j];
                max_diff = std::max(max_diff, std::abs(d));
                csv << ',' << fmt17(exact[j]) << ',' << fmt17(ss.state[j]) << ',' << fmt17(d) << '\n';
            } else {
                csv << ',' << fmt17(ss.state[j]) << '\n';
            }
        }
        const std::string suffix = rs.size() == 1 ? "" : "_r" + tag(r);
        const auto m = moments(ss.state, s.grid);
        json entry = {{"kind", "equilibrium"},
                      {"initial", ic.label},
                      {"provenance", provenance(cfg.params, cfg.law, r, cfg.rho)},
                      {"N", s.grid.size()},
                      {"P", s.P},
                      {"time", ss.time},
                      {"residual", ss.residual},
                      {"flux", m.flux},
                      {"mean_speed", m.mean_speed},
                      {"max_mass_drift", ss.max_mass_drift},
                      {"clamped", ss.clamped},
                      {"steps", ss.steps}};
        entry["provenance"]["steady_state"] = steady_json(cfg.steady);
        if (oracle) {
            entry["max_abs_difference"] = max_diff;
            const auto support =
                verify_quantized_support(ss.state, s.grid, cfg.params.delta_v, 1e-8 * std::max(cfg.rho, 1e-300),
                                         0.5 * s.grid.dv());
            entry["quantized_support"] = support.pass;
            entry["stray_mass"] = support.stray_mass;
        }
        run.write(run.path("equilibrium" + suffix + ".csv"), csv.str(), entry);
        if (eq) {
            std::ostringstream classes;
            write_equilibrium_csv(classes, *eq, cfg.params.delta_v);
            run.write(run.path("classes" + suffix + ".csv"), classes.str(),
                      {{"kind", "classes"}, {"provenance", provenance(cfg.params, cfg.law, r, cfg.rho)}});
        }
        json row = {{"r", r}, {"residual", ss.residual}};
        if (oracle) row["max_abs_difference"] = max_diff;
        summary.push_back(row);
    }
    if (any_without_oracle)
        run.note(cfg.params.kernel == Kernel::Chi
                     ? "chi kernel: no closed-form equilibrium exists, only the ODE column is written"
                     : "non-integer r: the closed form has no cell mapping, only the ODE column is written");
    return run.finish({{"equilibria", summary}});
}

json run_diagram(const RunConfig& cfg) {
    Run run(cfg, "diagram");
    const auto rhos = list_or(cfg.rho_grid, cfg.rho);
    for (double x : rhos)
        if (!(x > 0.0)) throw ConfigError("diagram densities must be positive");
    const auto rs = list_or(cfg.r_values, cfg.grid.ratio(cfg.params));
    std::vector<int> Ts = cfg.T_values;
    if (Ts.empty()) Ts.push_back(cfg.params.speed_classes());
    std::vector<ProbabilityLaw> laws;
    if (cfg.gamma_values.empty()) laws.push_back(cfg.law);
    for (double g : cfg.gamma_values) laws.push_back(ProbabilityLaw::power(g));

    DiagramOptions opts{cfg.steady, cfg.workers};
    std::ostringstream csv;
    bool header = true;
    json curves = json::array();
    auto emit = [&](const FundamentalDiagram& d, const ModelParams& p, const ProbabilityLaw& law) {
        write_diagram_csv(csv, d, header);
        header = false;
        json c = {{"provenance", provenance(p, law, d.r, std::nullopt)}, {"samples", d.samples.size()}};
        std::size_t bad = 0;
        for (const auto& s : d.samples) bad += s.converged ? 0 : 1;
        c["unconverged_samples"] = bad;
        if (bad > 0)
            run.warn("curve kernel=" + std::string(to_string(p.kernel)) + " T=" + std::to_string(p.speed_classes()) +
                     " r=" + (d.r ? fmt17(*d.r) : std::string("inf")) + ": " + std::to_string(bad) +
                     " samples did not reach steady state");
        if (const auto crit = critical_density(law, p)) c["critical_density"] = *crit;
        if (d.samples.size() >= 3) {
            const auto cd = detect_capacity_drop(d);
            json tr = json::array();
            for (const auto& t : cd.transitions)
                tr.push_back({{"rho_lo", t.rho_lo},
                              {"rho_hi", t.rho_hi},
                              {"slope_before", t.slope_before},
                              {"slope_after", t.slope_after}});
            c["capacity_drop"] = {{"rho_at_max_flux", cd.rho_at_max_flux},
                                  {"max_flux", cd.max_flux},
                                  {"drop_magnitude", cd.drop_magnitude},
                                  {"bracket", {cd.bracket_lo, cd.bracket_hi}},
                                  {"sparse", cd.sparse},
                                  {"transitions", tr}};
        } else {
            c["capacity_drop"] = nullptr;
        }
        curves.push_back(c);
    };
    for (int T : Ts) {
        const auto p = with_T(cfg.params, T);
        for (const auto& law : laws) {
            for (double r : rs) emit(fundamental_diagram(p, law, r, rhos, opts), p, law);
            if (cfg.infinite_r && p.kernel == Kernel::Delta) emit(infinite_r_diagram(p, law, rhos), p, law);
        }
    }
    run.write(run.path("diagram.csv"), csv.str(), {{"kind", "diagram"}, {"curves", curves.size()}});
    std::ostringstream summary;
    summary << curves.dump(2) << '\n';
    run.write(run.path("diagram_summary.json"), summary.str(), {{"kind", "diagram_summary"}});
    if (cfg.infinite_r && cfg.params.kernel == Kernel::Chi)
        run.note("chi kernel: the r -> infinity curve is only available for delta");
    return run.finish({{"curves", curves}});
}

json run_convergence(const RunConfig& cfg) {
    Run run(cfg, "convergence");
    const auto rhos = list_or(cfg.rho_grid, cfg.rho);
    const auto rs = list_or(cfg.r_values, cfg.grid.ratio(cfg.params));
    std::vector<int> Ts = cfg.T_values;
    if (Ts.empty()) Ts.push_back(cfg.params.speed_classes());
    const double t_end = cfg.convergence_t_end > 0.0 ? cfg.convergence_t_end : 400.0 / cfg.params.eta;

    struct Job {
        int T;
        double rho, r;
    };
    struct Row {
        ConvergenceFit fit;
        std::string status = "ok";
    };
    std::vector<Job> jobs;
    for (int T : Ts)
        for (double rho : rhos)
            for (double r : rs) jobs.push_back({T, rho, r});
    std::vector<Row> rows(jobs.size());

    parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
        const auto& job = jobs[i];
        try {
            const auto p = with_T(cfg.params, job.T);
            const auto s = setup(p, cfg.law, job.r, job.rho);
            CellMassVector f_inf;
            if (p.kernel == Kernel::Delta && s.ratio.integer)
                f_inf = equilibrium_on_grid(closed_form_equilibrium(job.rho, s.P, job.T), s.ratio.as_integer());
            else
                f_inf = find_steady_state(CellMassVector(s.grid.size(), job.rho / s.grid.size()), s.tensor, p.eta,
                                          cfg.steady)
                            .state;
            const auto f0 = perturb(f_inf, cfg.perturbation, cfg.seed);
            IntegratorControls ctl = cfg.integrator;
            ctl.sample_interval = ctl.sample_interval > 0.0 ? ctl.sample_interval : t_end / 4000.0;
            const auto traj = integrate(f0, s.tensor, p.eta, t_end, ctl);
            const auto e = distance_to_equilibrium(traj, f_inf);
            const auto [t0, t1] = decay_window(traj.times, e, cfg.window_upper, cfg.window_lower);
            rows[i].fit = fit_convergence_rate(traj.times, e, t0, t1);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& ex) {
            rows[i].status = std::string("failed: ") + ex.what();
        }
    });

    std::ostringstream csv;
    csv << "rho,r,T,delta_v,M,C,t_begin,t_end,fit_rms,points,status\n";
    json summary = json::array();
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& j = jobs[i];
        const auto& f = rows[i].fit;
        std::string status = rows[i].status;
        for (char& c : status)
            if (c == ',' || c == '\n') c = ';';
        csv << fmt17(j.rho) << ',' << fmt17(j.r) << ',' << j.T << ',' << fmt17(cfg.params.v_max / j.T) << ','
            << fmt17(f.rate) << ',' << fmt17(f.prefactor) << ',' << fmt17(f.t_begin) << ',' << fmt17(f.t_end) << ','
            << fmt17(f.rms_residual) << ',' << f.points << ',' << status << '\n';
        if (rows[i].status != "ok") run.warn("rho=" + fmt17(j.rho) + " r=" + fmt17(j.r) + ": " + rows[i].status);
        summary.push_back({{"rho", j.rho}, {"r", j.r}, {"T", j.T}, {"M", f.rate}, {"status", rows[i].status}});
    }
    json entry = {{"kind", "convergence"},
                  {"provenance", provenance(cfg.params, cfg.law, std::nullopt, std::nullopt)},
                  {"t_end", t_end},
                  {"perturbation", cfg.perturbation},
                  {"seed", cfg.seed},
                  {"window", {cfg.window_upper, cfg.window_lower}}};
    entry["provenance"].erase("r");
    entry["provenance"]["integrator"] = integrator_json(cfg.integrator);
    run.write(run.path("convergence.csv"), csv.str(), entry);
    return run.finish({{"rows", summary}});
}

json run_dump_tensor(const RunConfig& cfg) {
    Run run(cfg, "dump-tensor");
    const double r = cfg.grid.ratio(cfg.params);
    const auto s = setup(cfg.params, cfg.law, r, cfg.rho);
    std::ostringstream csv;
    write_tensor(csv, s.tensor);
    const auto report = verify_stochasticity(s.tensor);
    run.write(run.path("tensor.csv"), csv.str(),
              {{"kind", "tensor"},
               {"provenance", provenance(cfg.params, cfg.law, r, cfg.rho)},
               {"N", s.grid.size()},
               {"P", s.P},
               {"stochasticity_max_deviation", report.max_deviation},
               {"stochastic", report.pass}});
    return run.finish();
}

json run_command(std::string_view name, const RunConfig& cfg) {
    if (name == "simulate") return run_simulate(cfg);
    if (name == "equilibrium") return run_equilibrium(cfg);
    if (name == "diagram") return run_diagram(cfg);
    if (name == "convergence") return run_convergence(cfg);
    if (name == "dump-tensor") return run_dump_tensor(cfg);
    throw ConfigError("unknown command '" + std::string(name) + "'");
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
        dynamic_cast<const json::exception*>(&e))
        return 2;
    if (dynamic_cast<const NumericalError*>(&e)) return 3;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return 4;
    return 1;
}

}  // namespace ktraffic::app
