#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ktraffic/app/commands.hpp"
#include "ktraffic/app/config.hpp"
#include "ktraffic/dynamics.hpp"
#include "ktraffic/equilibrium.hpp"
#include "ktraffic/errors.hpp"
#include "ktraffic/macroscopics.hpp"
#include "ktraffic/tensor.hpp"

namespace py = pybind11;
using namespace ktraffic;

namespace {

ModelParams params(const std::string& kernel, double delta_v, double eta, double v_max) {
    ModelParams p;
    p.kernel = parse_kernel(kernel);
    p.delta_v = delta_v;
    p.eta = eta;
    p.v_max = v_max;
    p.validate();
    return p;
}

struct PyTensor {
    InteractionTensor tensor;
    VelocityGrid grid;
    double eta;
};

py::array_t<double> to_array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

py::array_t<double> to_matrix(const std::vector<CellMassVector>& rows, std::size_t cols) {
    py::array_t<double> out({rows.size(), cols});
    auto m = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = rows[i][j];
    return out;
}

IntegratorControls controls(const std::string& method, double step, double sample_interval, double rtol,
                            double atol) {
    IntegratorControls c;
    if (method == "rk4") c.stepper = Stepper::Rk4;
    else if (method == "dopri5") c.stepper = Stepper::DormandPrince;
    else throw ConfigError("method must be rk4 or dopri5");
    c.step = step;
    c.sample_interval = sample_interval;
    c.rtol = rtol;
    c.atol = atol;
    return c;
}

py::dict diagram_dict(const FundamentalDiagram& d) {
    std::vector<double> rho, flux, u, res;
    std::vector<bool> ok;
    for (const auto& s : d.samples) {
        rho.push_back(s.rho);
        flux.push_back(s.flux);
        u.push_back(s.mean_speed);
        ok.push_back(s.converged);
        res.push_back(s.residual);
    }
    py::dict out;
    out["rho"] = to_array(rho);
    out["flux"] = to_array(flux);
    out["mean_speed"] = to_array(u);
    out["converged"] = ok;
    out["residual"] = to_array(res);
    out["r"] = d.r ? py::cast(*d.r) : py::none();
    return out;
}

FundamentalDiagram diagram_from(const py::array_t<double>& rho, const py::array_t<double>& flux) {
    FundamentalDiagram d;
    auto a = rho.unchecked<1>();
    auto b = flux.unchecked<1>();
    if (a.shape(0) != b.shape(0)) throw DomainError("rho and flux differ in length");
    for (py::ssize_t i = 0; i < a.shape(0); ++i) d.samples.push_back({a(i), b(i), 0.0, true, 0.0});
    return d;
}

}  // namespace

PYBIND11_MODULE(_ktraffic, m) {
    m.attr("__version__") = app::kVersion;

    auto config_error = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    auto numerical = py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    // ConvergenceError must be translated before its NumericalError base, so it is registered by hand.
    static py::handle convergence = PyErr_NewException("ktraffic.ConvergenceError", numerical.ptr(), nullptr);
    m.attr("ConvergenceError") = convergence;
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConvergenceError& e) {
            py::object err = py::reinterpret_borrow<py::object>(convergence)(e.what());
            err.attr("time") = e.time();
            err.attr("residual") = e.residual();
            err.attr("last_state") = to_array(e.last_state());
            PyErr_SetObject(convergence.ptr(), err.ptr());
        }
    });
    (void)config_error;

    py::class_<PyTensor>(m, "Tensor")
        .def_property_readonly("size", [](const PyTensor& t) { return t.tensor.size(); })
        .def_property_readonly("P", [](const PyTensor& t) { return t.tensor.probability; })
        .def_property_readonly("centers", [](const PyTensor& t) { return to_array(t.grid.centers()); })
        .def("dense",
             [](const PyTensor& t) {
                 const std::size_t n = t.tensor.size();
                 py::array_t<double> out({n, n, n});
                 auto a = out.mutable_unchecked<3>();
                 for (std::size_t j = 0; j < n; ++j) {
                     const auto d = t.tensor.dense(j);
                     for (std::size_t h = 0; h < n; ++h)
                         for (std::size_t k = 0; k < n; ++k) a(j, h, k) = d[h][k];
                 }
                 return out;
             },
             "A[j, h, k]: probability that a vehicle in cell h meeting one in cell k ends in cell j")
        .def("max_stochasticity_deviation",
             [](const PyTensor& t) { return verify_stochasticity(t.tensor).max_deviation; });

    m.def(
        "build_tensor",
        [](const std::string& kernel, double delta_v, double r, double P, double eta, double v_max) {
            const auto p = params(kernel, delta_v, eta, v_max);
            auto grid = build_grid(p, r);
            auto tensor = build_tensor(p.kernel, grid, grid_ratio(p, grid), P);
            return PyTensor{std::move(tensor), std::move(grid), eta};
        },
        py::arg("kernel"), py::arg("delta_v"), py::arg("r"), py::arg("P"), py::arg("eta") = 1.0,
        py::arg("v_max") = 1.0);

    m.def("grid_centers", [](std::size_t n, double v_max) { return to_array(VelocityGrid(n, v_max).centers()); },
          py::arg("n_cells"), py::arg("v_max") = 1.0);

    m.def(
        "rhs", [](const PyTensor& t, const std::vector<double>& f) { return to_array(collision_rhs(f, t.tensor, t.eta)); },
        py::arg("tensor"), py::arg("f"));

    m.def(
        "integrate",
        [](const PyTensor& t, const std::vector<double>& f0, double t_end, const std::string& method, double step,
           double sample_interval, double rtol, double atol) {
            Trajectory tr;
            {
                py::gil_scoped_release release;
                tr = integrate(f0, t.tensor, t.eta, t_end, controls(method, step, sample_interval, rtol, atol));
            }
            py::dict out;
            out["t"] = to_array(tr.times);
            out["f"] = to_matrix(tr.states, t.tensor.size());
            out["terminal_residual"] = tr.terminal_residual;
            out["max_mass_drift"] = tr.max_mass_drift;
            out["min_component"] = tr.min_component;
            out["clamped"] = tr.clamped;
            return out;
        },
        py::arg("tensor"), py::arg("f0"), py::arg("t_end"), py::arg("method") = "rk4", py::arg("step") = 0.0,
        py::arg("sample_interval") = 0.0, py::arg("rtol") = 1e-10, py::arg("atol") = 1e-14);

    m.def(
        "steady_state",
        [](const PyTensor& t, const std::vector<double>& f0, double residual_tol, double change_tol, double t_max) {
            SteadyStateControls c;
            c.residual_tol = residual_tol;
            c.change_tol = change_tol;
            c.t_max = t_max;
            SteadyState s;
            {
                py::gil_scoped_release release;
                s = find_steady_state(f0, t.tensor, t.eta, c);
            }
            py::dict out;
            out["f"] = to_array(s.state);
            out["time"] = s.time;
            out["residual"] = s.residual;
            out["max_mass_drift"] = s.max_mass_drift;
            return out;
        },
        py::arg("tensor"), py::arg("f0"), py::arg("residual_tol") = 1e-10, py::arg("change_tol") = 1e-10,
        py::arg("t_max") = 1e6);

    m.def(
        "closed_form_equilibrium",
        [](double rho, double P, int T) { return to_array(closed_form_equilibrium(rho, P, T).masses); },
        py::arg("rho"), py::arg("P"), py::arg("T"));
    m.def(
        "equilibrium_on_grid",
        [](double rho, double P, int T, int r) {
            return to_array(equilibrium_on_grid(closed_form_equilibrium(rho, P, T), r));
        },
        py::arg("rho"), py::arg("P"), py::arg("T"), py::arg("r"));
    m.def(
        "unstable_equilibrium",
        [](double rho, double P, int T, int r, int jbar) { return to_array(unstable_equilibrium(rho, P, T, r, jbar)); },
        py::arg("rho"), py::arg("P"), py::arg("T"), py::arg("r"), py::arg("jbar"));

    m.def(
        "fundamental_diagram",
        [](const std::string& kernel, int T, double r, const std::vector<double>& rho, double gamma, double eta,
           unsigned workers) {
            const auto p = params(kernel, 1.0 / T, eta, 1.0);
            FundamentalDiagram d;
            {
                py::gil_scoped_release release;
                d = fundamental_diagram(p, ProbabilityLaw::power(gamma), r, rho, {.workers = workers});
            }
            return diagram_dict(d);
        },
        py::arg("kernel"), py::arg("T"), py::arg("r"), py::arg("rho"), py::arg("gamma") = 1.0, py::arg("eta") = 1.0,
        py::arg("workers") = 0);
    m.def(
        "infinite_r_diagram",
        [](int T, const std::vector<double>& rho, double gamma) {
            return diagram_dict(infinite_r_diagram(make_params(T), ProbabilityLaw::power(gamma), rho));
        },
        py::arg("T"), py::arg("rho"), py::arg("gamma") = 1.0);
    m.def(
        "capacity_drop",
        [](const py::array_t<double>& rho, const py::array_t<double>& flux, double slope_drop) {
            const auto cd = detect_capacity_drop(diagram_from(rho, flux), slope_drop);
            py::dict out;
            out["rho_at_max_flux"] = cd.rho_at_max_flux;
            out["max_flux"] = cd.max_flux;
            out["drop_magnitude"] = cd.drop_magnitude;
            out["bracket"] = py::make_tuple(cd.bracket_lo, cd.bracket_hi);
            out["sparse"] = cd.sparse;
            py::list tr;
            for (const auto& t : cd.transitions) tr.append(py::make_tuple(t.rho_lo, t.rho_hi));
            out["transitions"] = tr;
            return out;
        },
        py::arg("rho"), py::arg("flux"), py::arg("slope_drop") = 0.25);

    m.def("_run_command", [](const std::string& command, const std::string& config_json) {
        const auto cfg = app::parse_config(nlohmann::json::parse(config_json));
        nlohmann::json manifest;
        {
            py::gil_scoped_release release;
            manifest = app::run_command(command, cfg);
        }
        return manifest.dump();
    });
}
