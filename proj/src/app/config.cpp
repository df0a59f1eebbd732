#include "ktraffic/app/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <sstream>

#include "ktraffic/equilibrium.hpp"
#include "ktraffic/errors.hpp"

namespace ktraffic::app {

using nlohmann::json;

namespace {

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
    for (const auto& [k, v] : obj.items()) {
        bool ok = false;
        for (const char* key : keys) ok = ok || k == key;
        if (!ok) throw ConfigError("unknown key '" + k + "' in '" + where + "'");
    }
}

template <class T>
T get(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("wrong type for '") + key + "'");
    }
}

std::vector<double> number_list(const json& v, const char* what) {
    if (v.is_number()) return {v.get<double>()};
    if (v.is_object()) {
        allow_keys(v, what, {"start", "stop", "count"});
        const double a = get(v, "start", 0.0), b = get(v, "stop", 0.0);
        const int n = get(v, "count", 0);
        if (n < 1) throw ConfigError(std::string(what) + ": count must be positive");
        std::vector<double> x(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
        return x;
    }
    if (!v.is_array()) throw ConfigError(std::string(what) + " must be a number, a list or a range");
    std::vector<double> x;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError(std::string(what) + " must contain numbers");
        x.push_back(e.get<double>());
    }
    return x;
}

InitialCondition parse_initial(const json& j) {
    allow_keys(j, "initial", {"type", "epsilon", "cells", "values", "seed", "label"});
    InitialCondition ic;
    const auto type = get<std::string>(j, "type", "uniform");
    using K = InitialCondition::Kind;
    if (type == "uniform") ic.kind = K::Uniform;
    else if (type == "rest") ic.kind = K::Rest;
    else if (type == "congested") ic.kind = K::Congested;
    else if (type == "empty_low") ic.kind = K::EmptyLow;
    else if (type == "custom") ic.kind = K::Custom;
    else if (type == "equilibrium") ic.kind = K::Equilibrium;
    else throw ConfigError("unknown initial condition type '" + type + "'");
    ic.epsilon = get(j, "epsilon", ic.kind == K::Congested ? 0.01 : ic.kind == K::Equilibrium ? 1e-3 : 0.0);
    ic.empty_cells = get(j, "cells", 0);
    if (j.contains("values")) ic.values = number_list(j.at("values"), "initial.values");
    ic.seed = get<std::uint64_t>(j, "seed", 1);
    ic.label = get<std::string>(j, "label", type);
    if (ic.epsilon < 0.0) throw ConfigError("initial.epsilon must be non-negative");
    if (ic.kind == K::EmptyLow && ic.empty_cells < 1) throw ConfigError("empty_low needs cells >= 1");
    if (ic.kind == K::Custom && ic.values.empty()) throw ConfigError("custom initial condition needs values");
    return ic;
}

void require_positive(double v, const char* what) {
    if (!(v > 0.0)) throw ConfigError(std::string(what) + " must be positive");
}

// Uniform double in [0, 1) from the top 53 bits, identical on every platform.
double unit(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53;
}

}  // namespace

double GridSpec::ratio(const ModelParams& params) const {
    switch (kind) {
        case Kind::Ratio: return value;
        case Kind::Cells: {
            if (value < 2 || value != std::floor(value)) throw ConfigError("N must be an integer >= 2");
            if (params.whole_classes()) return (value - 1.0) / params.speed_classes();
            return (value - 1.0) / params.jump_ratio();
        }
        case Kind::CellWidth: return params.delta_v / value;
    }
    return value;
}

RunConfig parse_config(const json& doc) {
    allow_keys(doc, "config", {"model", "law", "grid", "rho", "initial", "integrator", "steady_state", "sweep",
                               "convergence", "output", "workers"});
    RunConfig c;
    c.source = doc;

    const json model = doc.value("model", json::object());
    allow_keys(model, "model", {"kernel", "T", "delta_v", "v_max", "rho_max", "eta"});
    c.params.kernel = parse_kernel(get<std::string>(model, "kernel", "delta"));
    c.params.v_max = get(model, "v_max", 1.0);
    c.params.rho_max = get(model, "rho_max", 1.0);
    c.params.eta = get(model, "eta", 1.0);
    if (model.contains("T") && model.contains("delta_v")) throw ConfigError("give either model.T or model.delta_v");
    if (model.contains("delta_v"))
        c.params.delta_v = get(model, "delta_v", 1.0);
    else
        c.params.delta_v = c.params.v_max / get(model, "T", 3);
    c.params.validate();

    const json law = doc.value("law", json::object());
    allow_keys(law, "law", {"gamma", "table"});
    if (law.contains("gamma") && law.contains("table")) throw ConfigError("give either law.gamma or law.table");
    if (law.contains("table")) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& row : law.at("table")) {
            if (!row.is_array() || row.size() != 2) throw ConfigError("law.table rows must be [rho, P] pairs");
            pts.emplace_back(row[0].get<double>(), row[1].get<double>());
        }
        c.law = ProbabilityLaw::table(std::move(pts));
    } else {
        c.law = ProbabilityLaw::power(get(law, "gamma", 1.0));
    }

    const json grid = doc.value("grid", json::object());
    allow_keys(grid, "grid", {"r", "N", "dv"});
    if (grid.size() > 1) throw ConfigError("give exactly one of grid.r, grid.N, grid.dv");
    if (grid.contains("N")) c.grid = {GridSpec::Kind::Cells, get(grid, "N", 2.0)};
    else if (grid.contains("dv")) c.grid = {GridSpec::Kind::CellWidth, get(grid, "dv", 1.0)};
    else c.grid = {GridSpec::Kind::Ratio, get(grid, "r", 1.0)};
    require_positive(c.grid.value, "grid value");

    c.rho = get(doc, "rho", 0.5);
    if (!(c.rho >= 0.0 && c.rho <= c.params.rho_max)) throw ConfigError("rho must lie in [0, rho_max]");

    if (doc.contains("initial")) {
        c.initial.clear();
        const auto& ini = doc.at("initial");
        if (ini.is_array())
            for (const auto& e : ini) c.initial.push_back(parse_initial(e));
        else
            c.initial.push_back(parse_initial(ini));
        if (c.initial.empty()) throw ConfigError("initial must not be an empty list");
    }

    const json integ = doc.value("integrator", json::object());
    allow_keys(integ, "integrator",
               {"method", "step", "rtol", "atol", "min_step", "t_end", "sample_interval", "geometric_ratio"});
    const auto method = get<std::string>(integ, "method", "rk4");
    if (method == "rk4") c.integrator.stepper = Stepper::Rk4;
    else if (method == "dopri5") c.integrator.stepper = Stepper::DormandPrince;
    else throw ConfigError("integrator.method must be rk4 or dopri5");
    c.integrator.step = get(integ, "step", 0.0);
    c.integrator.rtol = get(integ, "rtol", c.integrator.rtol);
    c.integrator.atol = get(integ, "atol", c.integrator.atol);
    c.integrator.min_step = get(integ, "min_step", c.integrator.min_step);
    c.integrator.sample_interval = get(integ, "sample_interval", 0.0);
    c.integrator.geometric_ratio = get(integ, "geometric_ratio", 0.0);
    c.t_end = get(integ, "t_end", c.t_end);
    require_positive(c.t_end, "integrator.t_end");
    require_positive(c.integrator.rtol, "integrator.rtol");
    require_positive(c.integrator.atol, "integrator.atol");
    if (c.integrator.step < 0.0 || c.integrator.sample_interval < 0.0 || c.integrator.geometric_ratio < 0.0)
        throw ConfigError("integrator step and sampling values must be non-negative");

    const json steady = doc.value("steady_state", json::object());
    allow_keys(steady, "steady_state", {"residual_tol", "change_tol", "t_max", "method", "rtol", "atol"});
    c.steady.residual_tol = get(steady, "residual_tol", c.steady.residual_tol);
    c.steady.change_tol = get(steady, "change_tol", c.steady.change_tol);
    c.steady.t_max = get(steady, "t_max", c.steady.t_max);
    const auto smethod = get<std::string>(steady, "method", "dopri5");
    if (smethod == "rk4") c.steady.integrator.stepper = Stepper::Rk4;
    else if (smethod != "dopri5") throw ConfigError("steady_state.method must be rk4 or dopri5");
    c.steady.integrator.rtol = get(steady, "rtol", c.steady.integrator.rtol);
    c.steady.integrator.atol = get(steady, "atol", c.steady.integrator.atol);
    require_positive(c.steady.residual_tol, "steady_state.residual_tol");
    require_positive(c.steady.change_tol, "steady_state.change_tol");
    require_positive(c.steady.t_max, "steady_state.t_max");

    const json sweep = doc.value("sweep", json::object());
    allow_keys(sweep, "sweep", {"rho", "r", "gamma", "T", "infinite_r"});
    if (sweep.contains("rho")) c.rho_grid = number_list(sweep.at("rho"), "sweep.rho");
    if (sweep.contains("r")) c.r_values = number_list(sweep.at("r"), "sweep.r");
    if (sweep.contains("gamma")) c.gamma_values = number_list(sweep.at("gamma"), "sweep.gamma");
    if (sweep.contains("T"))
        for (double t : number_list(sweep.at("T"), "sweep.T")) {
            if (t < 1 || t != std::floor(t)) throw ConfigError("sweep.T must hold positive integers");
            c.T_values.push_back(static_cast<int>(t));
        }
    c.infinite_r = get(sweep, "infinite_r", true);
    for (double x : c.rho_grid)
        if (!(x >= 0.0 && x <= c.params.rho_max)) throw ConfigError("sweep.rho outside [0, rho_max]");
    for (double x : c.r_values) require_positive(x, "sweep.r");
    for (double g : c.gamma_values) ProbabilityLaw::power(g);

    const json conv = doc.value("convergence", json::object());
    allow_keys(conv, "convergence", {"perturbation", "seed", "t_end", "window"});
    c.perturbation = get(conv, "perturbation", c.perturbation);
    c.seed = get<std::uint64_t>(conv, "seed", c.seed);
    c.convergence_t_end = get(conv, "t_end", 0.0);
    if (conv.contains("window")) {
        const auto w = number_list(conv.at("window"), "convergence.window");
        if (w.size() != 2 || !(w[0] > w[1]) || !(w[1] > 0.0) || !(w[0] <= 1.0))
            throw ConfigError("convergence.window must be [upper, lower] with 1 >= upper > lower > 0");
        c.window_upper = w[0];
        c.window_lower = w[1];
    }
    require_positive(c.perturbation, "convergence.perturbation");

    const json out = doc.value("output", json::object());
    allow_keys(out, "output", {"dir", "prefix"});
    c.out_dir = get<std::string>(out, "dir", ".");
    c.prefix = get<std::string>(out, "prefix", "run");
    if (c.prefix.empty()) throw ConfigError("output.prefix must not be empty");
    const int workers = get(doc, "workers", 0);
    if (workers < 0) throw ConfigError("workers must be non-negative");
    c.workers = static_cast<unsigned>(workers);
    return c;
}

json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    try {
        return json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
    }
}

CellMassVector perturb(CellMassVector f, double epsilon, std::uint64_t seed) {
    double before = 0.0, added = 0.0;
    for (auto& v : f) {
        before += v;
        const double d = epsilon * unit(seed);
        v += d;
        added += d;
    }
    if (before > 0.0)
        for (auto& v : f) v *= before / (before + added);
    return f;
}

CellMassVector make_initial(const InitialCondition& ic, const RunConfig& cfg, const VelocityGrid& grid, double P) {
    const std::size_t n = grid.size();
    const double rho = cfg.rho;
    CellMassVector f(n, 0.0);
    using K = InitialCondition::Kind;
    switch (ic.kind) {
        case K::Uniform: std::fill(f.begin(), f.end(), rho / static_cast<double>(n)); break;
        case K::Rest: f[0] = rho; break;
        case K::Congested:
            if (ic.epsilon > rho) throw ConfigError("congested epsilon exceeds rho");
            f[0] = ic.epsilon;
            f[n - 1] += rho - ic.epsilon;
            break;
        case K::EmptyLow: {
            const auto k = static_cast<std::size_t>(ic.empty_cells);
            if (k >= n) throw ConfigError("empty_low empties every cell");
            if (ic.epsilon > rho) throw ConfigError("empty_low epsilon exceeds rho");
            for (std::size_t j = k; j < n; ++j) f[j] = (rho - ic.epsilon) / static_cast<double>(n - k);
            f[0] += ic.epsilon;
            break;
        }
        case K::Custom: {
            if (ic.values.size() != n)
                throw ConfigError("custom initial condition has " + std::to_string(ic.values.size()) + " values for " +
                                  std::to_string(n) + " cells");
            for (double v : ic.values)
                if (!(v >= 0.0)) throw ConfigError("custom initial masses must be non-negative");
            const double total = std::accumulate(ic.values.begin(), ic.values.end(), 0.0);
            if (std::abs(total - rho) > 1e-12 * std::max(1.0, rho))
                throw ConfigError("custom initial masses must sum to rho");
            f = ic.values;
            break;
        }
        case K::Equilibrium: {
            const auto ratio = GridRatio::from_cells(n, cfg.params.speed_classes());
            if (cfg.params.kernel != Kernel::Delta || !ratio.integer)
                throw ConfigError("equilibrium initial condition needs the delta kernel and an integer r");
            f = equilibrium_on_grid(closed_form_equilibrium(rho, P, cfg.params.speed_classes()), ratio.as_integer());
            if (ic.epsilon > 0.0 && rho > 0.0) f = perturb(std::move(f), ic.epsilon, ic.seed);
            break;
        }
    }
    return f;
}

}  // namespace ktraffic::app
