// cpmsim: batch runner for conditioned-state dynamics under continuous
// position measurement. Subcommands mirror the experiment families; every
// run writes CSV time series plus a JSON summary and is byte-reproducible
// given the same config and seed.
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure,
// 4 invariant violation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpm/scenario.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    double dt = 0.0;
    std::uint64_t steps = 0;
    bool steps_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "scenario config (JSON)")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "override the first seed")->each([&](const std::string&) {
        args.seed_set = true;
    });
    cmd->add_option("--dt", args.dt, "override the step size");
    cmd->add_option("--steps", args.steps, "override the step count")->each([&](const std::string&) {
        args.steps_set = true;
    });
}

int run_kind(const std::string& kind, const CommonArgs& args) {
    std::ifstream in(args.config_path, std::ios::binary);
    if (!in) {
        std::cerr << "error: cannot open config " << args.config_path << "\n";
        return 2;
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: config parse: " << e.what() << "\n";
        return 2;
    }
    if (!j.contains("kind")) j["kind"] = kind;
    if (j.at("kind").get<std::string>() != kind) {
        std::cerr << "error: config key 'kind': config is for '" << j.at("kind").get<std::string>()
                  << "' but subcommand is '" << kind << "'\n";
        return 2;
    }

    try {
        cpm::ScenarioConfig cfg = cpm::parse_scenario(j);
        if (args.seed_set) cfg.seeds.front() = args.seed;
        if (args.dt > 0.0) {
            cfg.dt = args.dt;
            if (!args.steps_set && cfg.horizon > 0.0)
                cfg.steps = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.dt));
        }
        if (args.steps_set) cfg.steps = args.steps;
        const auto summary = cpm::run_scenario(cfg, args.out_dir);
        if (kind == "cavity") {
            const auto& c = summary.at("cavity");
            std::printf("measurement strength alpha  %.4e 1/(s m^2)\n", c.at("alpha").get<double>());
            std::printf("dimensionless r             %.4f (cross-check %.4f)\n", c.at("r").get<double>(),
                        c.at("r_decomposition").get<double>());
            std::printf("recoil frequency            %.4e rad/s   Lamb-Dicke ok: %s\n",
                        c.at("omega_rec").get<double>(), c.at("lamb_dicke_ok").get<bool>() ? "yes" : "no");
            std::printf("saturation parameter        %.4e         dispersive ok: %s\n",
                        c.at("s_sat").get<double>(), c.at("dispersive_ok").get<bool>() ? "yes" : "no");
            std::printf("heating budget              beta = %.4e, q = %.4f, eta_eff = %.4f\n",
                        c.at("beta_total").get<double>(), c.at("q").get<double>(),
                        c.at("eta_eff").get<double>());
            std::printf("collapse time (homodyne)    %.4g s\n", c.at("tau_col_homodyne_s").get<double>());
            std::printf("collapse time (heterodyne)  %.4g s\n", c.at("tau_col_heterodyne_s").get<double>());
            std::printf("free-particle floor         %.4g s\n", c.at("free_particle_floor_s").get<double>());
        }
        std::cout << summary.dump(2) << "\n";
        return 0;
    } catch (const cpm::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const cpm::AdmissibilityViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        // integration/simulation failures and anything else numeric
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"conditioned-state dynamics of a continuously measured oscillator"};
    app.require_subcommand(1);

    const char* kinds[] = {"steady-state", "relax", "simulate", "observers", "kalman-compare", "cavity"};
    CommonArgs args[6];
    CLI::App* subs[6];
    for (int i = 0; i < 6; ++i) {
        subs[i] = app.add_subcommand(kinds[i], std::string("run a '") + kinds[i] + "' scenario");
        add_common(subs[i], args[i]);
    }

    std::string verify_csv_path;
    double verify_tol = cpm::kSdeTol;
    CLI::App* verify = app.add_subcommand("verify", "check an emitted CSV against the state invariants");
    verify->add_option("csv", verify_csv_path, "CSV file to check")->required();
    verify->add_option("--tol", verify_tol, "admissibility tolerance");

    CLI11_PARSE(app, argc, argv);

    if (verify->parsed()) {
        const auto violation = cpm::verify_csv(verify_csv_path, verify_tol);
        if (violation) {
            std::cerr << "violation: " << *violation << "\n";
            return 4;
        }
        std::cout << "ok: " << verify_csv_path << "\n";
        return 0;
    }
    for (int i = 0; i < 6; ++i)
        if (subs[i]->parsed()) return run_kind(kinds[i], args[i]);
    return 2;
}
