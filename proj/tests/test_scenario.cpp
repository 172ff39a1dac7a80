#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cpm/scenario.hpp"

using namespace cpm;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

std::string source_dir() { return CPM_SOURCE_DIR; }

std::string fresh_dir(const std::string& tag) {
    const auto d = fs::temp_directory_path() / ("cpm_scn_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json run_config(const std::string& name, const std::string& out) {
    const auto cfg = load_scenario(source_dir() + "/configs/" + name);
    return run_scenario(cfg, out);
}

std::vector<std::vector<double>> read_csv(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::string line;
    std::getline(in, line); // header
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        rows.push_back(std::move(row));
    }
    return rows;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CPM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return (rc >= 256) ? (rc >> 8) : rc; // exit status on POSIX
}

} // namespace

TEST_CASE("relax scenario reproduces the covariance relaxation and entropy decay", "[scenario]") {
    const auto out = fresh_dir("relax");
    const auto summary = run_config("relax_r20.json", out);

    const auto rows = read_csv(out + "/relax.csv");
    REQUIRE(rows.size() == 20001);
    const auto& last = rows.back();
    const auto ss = steady_state(load_scenario(source_dir() + "/configs/relax_r20.json").params);
    CHECK(std::abs(last[3] - ss.xx) < 1e-6);
    CHECK(std::abs(last[4] - ss.pp) < 1e-6);
    CHECK(std::abs(last[5] - ss.xp) < 1e-6);
    CHECK(last[7] < 1e-6); // S_vn
    CHECK(last[8] < 1e-6); // s_lin
    CHECK(summary.at("max_admissibility_violation").get<double>() < 1e-9);
    const double tau = summary.at("tau_col").get<double>();
    const double tconv = summary.at("convergence_time").get<double>();
    CHECK(tconv > tau);
    CHECK(tconv < 3.0 * tau);
    CHECK_FALSE(verify_csv(out + "/relax.csv").has_value());
}

TEST_CASE("scenario outputs are byte-identical across runs", "[scenario]") {
    const auto out1 = fresh_dir("det1");
    const auto out2 = fresh_dir("det2");
    run_config("simulate_r20.json", out1);
    run_config("simulate_r20.json", out2);
    for (const auto& entry : fs::directory_iterator(out1)) {
        const auto name = entry.path().filename().string();
        CAPTURE(name);
        CHECK(slurp(entry.path().string()) == slurp((fs::path(out2) / name).string()));
    }
    // and the simulate artifacts exist per seed
    CHECK(fs::exists(fs::path(out1) / "traj_seed_1.csv"));
    CHECK(fs::exists(fs::path(out1) / "record_seed_2.csv"));
    CHECK(fs::exists(fs::path(out1) / "record_seed_2.json"));
    CHECK_FALSE(verify_csv((fs::path(out1) / "traj_seed_1.csv").string()).has_value());
}

TEST_CASE("observers scenario reports agreement times", "[scenario]") {
    const auto out = fresh_dir("obs");
    const auto summary = run_config("observers_flat_prior.json", out);
    const double tau = summary.at("tau_col").get<double>();
    CHECK(summary.at("t_agree_initial").get<double>() < 0.1 * tau);
    const double t_abs = summary.at("t_agree_steady").get<double>();
    CHECK(t_abs / tau > 0.5);
    CHECK(t_abs / tau < 2.0);
    const auto rows = read_csv(out + "/observers.csv");
    REQUIRE(rows.front().size() == 12); // schema with the error columns
    CHECK(rows.front()[9] == 1e10);     // e_xx
    CHECK(rows.back()[9] < 1e-4);       // ~1.2e-5 at t = 3 tau_col
    CHECK(rows.back()[9] > 1e-7);
}

TEST_CASE("kalman-compare scenario confirms the equivalence", "[scenario]") {
    const auto out = fresh_dir("kal");
    const auto summary = run_config("kalman_phi_pi4.json", out);
    CHECK(summary.at("kalman").at("max_mean_diff").get<double>() < 1e-12);
    CHECK(summary.at("kalman").at("max_cov_diff").get<double>() < 1e-12);
    CHECK(summary.at("kalman").at("admissible").get<bool>());
    CHECK(summary.at("kalman").at("steady_area").get<double>() == Approx(1.0).margin(1e-9));
}

TEST_CASE("cavity scenario emits the derived quantities", "[scenario]") {
    const auto out = fresh_dir("cav");
    const auto summary = run_config("cesium_cavity.json", out);
    const auto& c = summary.at("cavity");
    CHECK(c.at("alpha").get<double>() == Approx(2.4e20).epsilon(0.05));
    CHECK(c.at("r").get<double>() == Approx(5.6).epsilon(0.05));
    CHECK(c.at("tau_col_heterodyne_s").get<double>() == Approx(19e-6).epsilon(0.15));
    CHECK(c.at("lamb_dicke_ok").get<bool>());
    CHECK(c.at("dispersive_ok").get<bool>());
    CHECK(c.at("free_particle_floor_s").get<double>() > 0.0);
}

TEST_CASE("steady-state scenario and zero-horizon runs", "[scenario]") {
    const auto out = fresh_dir("ss");
    run_config("steady_state_r20.json", out);
    CHECK(read_csv(out + "/steady_state.csv").size() == 1);

    // a zero-horizon relax emits exactly the initial row
    auto j = nlohmann::json::parse(slurp(source_dir() + "/configs/relax_r20.json"));
    j["horizon"] = 0.0;
    j.erase("steps");
    const auto cfg = parse_scenario(j);
    const auto out2 = fresh_dir("zero");
    run_scenario(cfg, out2);
    const auto rows = read_csv(out2 + "/relax.csv");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0][0] == 0.0);
    CHECK(rows[0][3] == 20.0);
}

TEST_CASE("runs in the sign-flip regime are flagged in the summary", "[scenario]") {
    // For r < sin(2 phi) the (1 - sin 2phi / r) coefficient changes sign;
    // such runs carry a marker in their metadata.
    auto j = nlohmann::json::parse(slurp(source_dir() + "/configs/relax_r20.json"));
    j["params"]["r"] = 0.1;
    j["params"]["phi"] = 0.7853981633974483; // sin(2 phi) = 1 > r
    j["horizon"] = 1.0;
    const auto out = fresh_dir("flip");
    const auto summary = run_scenario(parse_scenario(j), out);
    CHECK(summary.at("sign_flip_regime").get<bool>());

    const auto out2 = fresh_dir("noflip");
    const auto s2 = run_config("relax_r20.json", out2);
    CHECK_FALSE(s2.at("sign_flip_regime").get<bool>());
}

TEST_CASE("config validation names the offending key", "[scenario]") {
    auto good = nlohmann::json::parse(slurp(source_dir() + "/configs/relax_r20.json"));

    auto bad = good;
    bad.erase("kind");
    CHECK_THROWS_AS(parse_scenario(bad), ConfigError);

    bad = good;
    bad["params"]["mode"] = "sideways";
    try {
        parse_scenario(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key == "params.mode");
    }

    bad = good;
    bad["params"]["r"] = -2.0;
    CHECK_THROWS_AS(parse_scenario(bad), ConfigError);

    bad = good;
    bad["horizon"] = -1.0;
    try {
        parse_scenario(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key == "horizon");
    }

    bad = good;
    bad["initial"]["v_xx"] = -5.0;
    CHECK_THROWS_AS(parse_scenario(bad), ConfigError);
}

TEST_CASE("verify_csv flags corrupted rows", "[scenario]") {
    const auto out = fresh_dir("verify");
    run_config("relax_r20.json", out);
    const auto path = out + "/relax.csv";
    REQUIRE_FALSE(verify_csv(path).has_value());

    // append a row violating the Heisenberg floor
    {
        std::ofstream app(path, std::ios::app | std::ios::binary);
        app << "201,0,0,0.5,0.5,0,0.5,0,0\n";
    }
    const auto violation = verify_csv(path);
    REQUIRE(violation.has_value());
    CHECK(violation->find("Heisenberg") != std::string::npos);
}

TEST_CASE("command line drives the scenarios with documented exit codes", "[scenario]") {
    const auto cfgs = source_dir() + "/configs";
    const auto out = fresh_dir("cli");

    CHECK(run_cli("relax --config " + cfgs + "/relax_r20.json --out " + out + "/relax --steps 200") == 0);
    CHECK(run_cli("verify " + out + "/relax/relax.csv") == 0);

    // config errors exit with 2
    CHECK(run_cli("relax --config " + cfgs + "/does_not_exist.json --out " + out) == 2);
    CHECK(run_cli("simulate --config " + cfgs + "/relax_r20.json --out " + out) == 2); // kind mismatch

    // numeric/domain failures exit with 3: steady state at phi = pi/2
    const auto badcfg = out + "/pihalf.json";
    {
        std::ofstream o(badcfg);
        o << R"({"kind":"steady-state","params":{"r":20.0,"phi":1.5707963267948966}})";
    }
    CHECK(run_cli("steady-state --config " + badcfg + " --out " + out + "/ss") == 3);

    // invariant violations exit with 4
    const auto corrupt = out + "/bad.csv";
    {
        std::ofstream o(corrupt);
        o << "t,x_mean,p_mean,v_xx,v_pp,v_xp,area,S_vn,s_lin\n0,0,0,0.5,0.5,0,0.5,0,0\n";
    }
    CHECK(run_cli("verify " + corrupt) == 4);

    // seed override changes the emitted record
    CHECK(run_cli("simulate --config " + cfgs + "/simulate_r20.json --out " + out + "/s1 --steps 500") == 0);
    CHECK(run_cli("simulate --config " + cfgs + "/simulate_r20.json --out " + out +
                  "/s2 --steps 500 --seed 99") == 0);
    CHECK(slurp(out + "/s1/record_seed_1.csv") != slurp(out + "/s2/record_seed_99.csv"));
}
