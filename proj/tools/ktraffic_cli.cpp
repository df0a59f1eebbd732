#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ktraffic/app/commands.hpp"
#include "ktraffic/app/config.hpp"
#include "ktraffic/errors.hpp"

using nlohmann::json;

namespace {

struct Overrides {
    std::string config;
    std::optional<int> N, T;
    std::optional<double> dv, r, gamma, eta, rho, t_end;
    std::optional<std::string> kernel, out_dir, prefix;
    std::optional<int> workers;

    // Command-line flags win over the file; the merged document is what the manifest records.
    json apply(json doc) const {
        if (!doc.is_object()) throw ktraffic::ConfigError("config root must be an object");
        auto section = [&doc](const char* key) -> json& {
            if (!doc.contains(key)) doc[key] = json::object();
            return doc[key];
        };
        if (T) {
            section("model").erase("delta_v");
            section("model")["T"] = *T;
        }
        if (kernel) section("model")["kernel"] = *kernel;
        if (eta) section("model")["eta"] = *eta;
        if (gamma) doc["law"] = {{"gamma", *gamma}};
        if (N) doc["grid"] = {{"N", *N}};
        if (dv) doc["grid"] = {{"dv", *dv}};
        if (r) doc["grid"] = {{"r", *r}};
        if (rho) doc["rho"] = *rho;
        if (t_end) section("integrator")["t_end"] = *t_end;
        if (out_dir) section("output")["dir"] = *out_dir;
        if (prefix) section("output")["prefix"] = *prefix;
        if (workers) doc["workers"] = *workers;
        return doc;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete-velocity kinetic traffic model: trajectories, equilibria, fundamental diagrams"};
    app.set_version_flag("--version", ktraffic::app::kVersion);
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("-c,--config", o.config, "JSON configuration file (comments allowed)")->check(CLI::ExistingFile);
    app.add_option("--N", o.N, "number of velocity cells");
    app.add_option("--dv", o.dv, "velocity cell width");
    app.add_option("--r", o.r, "cells per speed class (delta_v / dv)");
    app.add_option("--T", o.T, "number of speed classes, v_max / delta_v");
    app.add_option("--gamma", o.gamma, "exponent of the power law P = (1 - rho)^gamma");
    app.add_option("--eta", o.eta, "interaction rate");
    app.add_option("--rho", o.rho, "density");
    app.add_option("--kernel", o.kernel, "delta or chi");
    app.add_option("--t-end", o.t_end, "final time for simulate");
    app.add_option("--out-dir", o.out_dir, "output directory");
    app.add_option("--prefix", o.prefix, "output file prefix");
    app.add_option("--workers", o.workers, "worker threads for sweeps (0 = all cores)");

    app.add_subcommand("simulate", "integrate from each configured initial condition");
    app.add_subcommand("equilibrium", "steady state next to the closed-form equilibrium");
    app.add_subcommand("diagram", "fundamental diagram over the density sweep");
    app.add_subcommand("convergence", "exponential convergence rates over the density sweep");
    app.add_subcommand("dump-tensor", "write the interaction tensor as sparse CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        json doc = o.config.empty() ? json::object() : ktraffic::app::read_config_file(o.config);
        const auto cfg = ktraffic::app::parse_config(o.apply(std::move(doc)));
        const auto manifest = ktraffic::app::run_command(command, cfg);
        for (const auto& w : manifest.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << '\n';
        for (const auto& out : manifest.at("outputs")) std::cout << out.at("file").get<std::string>() << '\n';
        return 0;
    } catch (const std::exception& e) {
        const int code = ktraffic::app::exit_code_for(e);
        std::cerr << "error: " << e.what() << '\n';
        return code;
    }
}
