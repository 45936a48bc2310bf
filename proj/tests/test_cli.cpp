#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using Catch::Matchers::ContainsSubstring;

namespace {

namespace fs = std::filesystem;

fs::path scratch_root() {
    const auto dir = fs::temp_directory_path() / "microcav_cli_test";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct RunResult {
    int code = -1;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path log = scratch_root() / ("run_" + std::to_string(counter++) + ".log");
    const std::string cmd =
        std::string(MICROCAV_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = slurp(log);
    return r;
}

fs::path write_config(const std::string& name, const std::string& content) {
    const fs::path path = scratch_root() / name;
    std::ofstream out(path, std::ios::trunc);
    out << content;
    return path;
}

// field values from the results format, in file order
std::vector<double> record_values(const std::string& text, const std::string& key) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string line;
    const std::string needle = key + ": ";
    while (std::getline(in, line)) {
        std::size_t at = line.find(needle);
        if (at == std::string::npos) continue;
        // must be the whole key, not a suffix of a longer one
        std::size_t start = line.find_first_not_of(' ');
        if (line.compare(start, needle.size(), needle) != 0) continue;
        out.push_back(std::strtod(line.c_str() + at + needle.size(), nullptr));
    }
    return out;
}

// drop the wall-clock line so reruns compare byte-for-byte
std::string without_timing(const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("timing_s:", 0) != 0) out << line << "\n";
    return out.str();
}

}  // namespace

TEST_CASE("version and help exit cleanly") {
    const RunResult ver = run_cli("--version");
    CHECK(ver.code == 0);
    CHECK_THAT(ver.output, ContainsSubstring("0.1.0"));

    const RunResult help = run_cli("--help");
    CHECK(help.code == 0);
    CHECK_THAT(help.output, ContainsSubstring("design"));
    CHECK_THAT(help.output, ContainsSubstring("simulate"));
    CHECK_THAT(help.output, ContainsSubstring("analyze"));
    CHECK_THAT(help.output, ContainsSubstring("plan"));

    CHECK(run_cli("").code == 2);             // a subcommand is required
    CHECK(run_cli("--nonsense").code == 2);
    CHECK(run_cli("analyze").code == 2);      // missing required paths
}

TEST_CASE("design reports the reference numbers") {
    const fs::path out = scratch_root() / "design_default";
    const RunResult r = run_cli("--out " + out.string() + " design");
    REQUIRE(r.code == 0);
    const std::string rec = slurp(out / "design.txt");
    CHECK_THAT(rec, ContainsSubstring("# format: microcav-results/1"));
    CHECK_THAT(rec, ContainsSubstring("command: design"));
    CHECK_THAT(rec, ContainsSubstring("run_id: "));
    CHECK_THAT(rec, ContainsSubstring("waist_m: 1.1811778630"));
    CHECK_THAT(rec, ContainsSubstring("u0_over_kappa: 4.4727"));
    CHECK_THAT(rec, ContainsSubstring("baseline_transmission: 0.158982"));
    CHECK_THAT(r.output, ContainsSubstring("w0 = 11.81 um"));

    // explicit config without a particle section: cavity-only report
    const fs::path cfg = write_config("cavity_only.json",
                                      R"({"geometry": {"length": "130 um"}})");
    const fs::path out2 = scratch_root() / "design_cavity_only";
    const RunResult r2 =
        run_cli("--config " + cfg.string() + " --out " + out2.string() + " design");
    REQUIRE(r2.code == 0);
    const std::string rec2 = slurp(out2 / "design.txt");
    CHECK_THAT(rec2, ContainsSubstring("cavity:"));
    CHECK_THAT(rec2, !ContainsSubstring("u0_over_kappa"));
}

TEST_CASE("simulate and analyze round-trip a batch") {
    const fs::path cfg =
        write_config("batch.json", R"({"batch": {"events": 2}, "seed": 11})");
    const fs::path sim = scratch_root() / "roundtrip_sim";
    const RunResult rs =
        run_cli("--config " + cfg.string() + " --out " + sim.string() + " simulate");
    REQUIRE(rs.code == 0);
    REQUIRE(fs::exists(sim / "trace_000.csv"));
    REQUIRE(fs::exists(sim / "trace_001.csv"));
    REQUIRE(fs::exists(sim / "truth.csv"));
    REQUIRE(fs::exists(sim / "simulate.txt"));

    const std::string trace = slurp(sim / "trace_000.csv");
    CHECK(trace.rfind("# format: microcav-trace/1\n", 0) == 0);
    CHECK_THAT(trace, ContainsSubstring("# truth_vx_m_s: "));
    CHECK_THAT(trace, ContainsSubstring("# base_seed: 11"));

    const std::string truth = slurp(sim / "truth.csv");
    const std::vector<double> true_vx = {11.206077186321121, 22.014379168393404};
    const std::vector<double> true_vz = {1.7464813217909876, 2.3280476245518025};
    CHECK_THAT(truth, ContainsSubstring("11.206077186321121"));
    CHECK_THAT(truth, ContainsSubstring("22.014379168393404"));

    const fs::path an = scratch_root() / "roundtrip_an";
    const RunResult ra = run_cli("--out " + an.string() + " analyze " +
                                 (sim / "trace_000.csv").string() + " " +
                                 (sim / "trace_001.csv").string());
    REQUIRE(ra.code == 0);
    const std::string rec = slurp(an / "analysis.txt");
    CHECK_THAT(rec, ContainsSubstring("kind: transit"));
    CHECK_THAT(rec, ContainsSubstring("total_events: 2"));

    const std::vector<double> vx = record_values(rec, "vx_m_s");
    const std::vector<double> vz = record_values(rec, "vz_m_s");
    REQUIRE(vx.size() == 2);
    REQUIRE(vz.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(std::abs(vx[i] - true_vx[i]) < 0.5);
        CHECK(std::abs(vz[i] - true_vz[i]) < 0.05);
    }
    CHECK(record_values(rec, "events") == std::vector<double>{1.0, 1.0});
}

TEST_CASE("calibration scans flow through simulate and analyze") {
    const fs::path sim = scratch_root() / "scan_sim";
    const RunResult rs = run_cli("--out " + sim.string() + " simulate --scan");
    REQUIRE(rs.code == 0);
    REQUIRE(fs::exists(sim / "scan.csv"));
    CHECK(slurp(sim / "scan.csv").rfind("# format: microcav-scan/1\n", 0) == 0);

    const fs::path an = scratch_root() / "scan_an";
    const RunResult ra =
        run_cli("--out " + an.string() + " analyze " + (sim / "scan.csv").string());
    REQUIRE(ra.code == 0);
    const std::string rec = slurp(an / "analysis.txt");
    CHECK_THAT(rec, ContainsSubstring("kind: calibration"));
    CHECK_THAT(rec, ContainsSubstring("converged: true"));
    const std::vector<double> finesse = record_values(rec, "finesse");
    REQUIRE(finesse.size() == 1);
    CHECK(std::abs(finesse[0] - 34000.0) / 34000.0 < 0.05);
}

TEST_CASE("plan writes the sweep table and the mass minimum") {
    const fs::path cfg = write_config("plan.json", R"({
  "sweep": {"ratios": [1.5], "powers": [300], "masses_amu": [1e7, 1e8, 1e9, 1e10],
            "lengths": ["30 um", "100 um", "300 um"]}
})");
    const fs::path out = scratch_root() / "plan_out";
    const RunResult r =
        run_cli("--config " + cfg.string() + " --out " + out.string() + " plan");
    REQUIRE(r.code == 0);

    const std::string table = slurp(out / "sweep_table.csv");
    CHECK_THAT(table, ContainsSubstring(
                          "q,P_cav_W,mass_amu,L_m,R_m,w0_m,Vm_m3,F_A,F_B,F_required,binding"));
    CHECK(std::count(table.begin(), table.end(), '\n') == 3 + 12);

    const std::string rec = slurp(out / "plan_summary.txt");
    CHECK_THAT(rec, ContainsSubstring("feasible: true"));
    CHECK_THAT(rec, ContainsSubstring("binding: strong_coupling"));
    const std::vector<double> mass = record_values(rec, "mass_amu");
    REQUIRE(mass.size() == 1);
    CHECK(std::abs(mass[0] - 7.69283296e+06) / 7.69283296e+06 < 1e-4);
    const std::vector<double> rows = record_values(rec, "sweep_rows");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0] == 12.0);
    CHECK_THAT(r.output, ContainsSubstring("min coolable mass"));

    // hopeless drive power: reported, not thrown
    const fs::path cfg2 = write_config("plan_infeasible.json", R"({
  "plan": {"power": 1e-6},
  "sweep": {"ratios": [1.5], "powers": [300], "masses_amu": [1e8], "lengths": ["100 um"]}
})");
    const fs::path out2 = scratch_root() / "plan_infeasible";
    const RunResult r2 =
        run_cli("--config " + cfg2.string() + " --out " + out2.string() + " plan");
    REQUIRE(r2.code == 0);
    const std::string rec2 = slurp(out2 / "plan_summary.txt");
    CHECK_THAT(rec2, ContainsSubstring("feasible: false"));
    CHECK_THAT(rec2, ContainsSubstring("resolved-sideband"));
}

TEST_CASE("outputs are deterministic across runs, threads, and seed spelling") {
    const fs::path cfgA =
        write_config("det_a.json", R"({"batch": {"events": 2}, "seed": 11})");
    const fs::path cfgB = write_config("det_b.json", R"({"batch": {"events": 2}})");

    const fs::path d1 = scratch_root() / "det1";
    const fs::path d2 = scratch_root() / "det2";
    const fs::path d3 = scratch_root() / "det3";
    REQUIRE(run_cli("--config " + cfgA.string() + " --threads 1 --out " + d1.string() +
                    " simulate")
                .code == 0);
    REQUIRE(run_cli("--config " + cfgA.string() + " --threads 7 --out " + d2.string() +
                    " simulate")
                .code == 0);
    // seed from the command line instead of the config file
    REQUIRE(run_cli("--config " + cfgB.string() + " --seed 11 --out " + d3.string() +
                    " simulate")
                .code == 0);

    for (const char* name : {"trace_000.csv", "trace_001.csv", "truth.csv"}) {
        const std::string ref = slurp(d1 / name);
        CHECK(slurp(d2 / name) == ref);
        // config differs only in where the seed came from; payload rows match
        if (std::string(name) != "truth.csv")
            CHECK(slurp(d3 / name).substr(slurp(d3 / name).find("time_s")) ==
                  ref.substr(ref.find("time_s")));
    }
    CHECK(without_timing(slurp(d1 / "simulate.txt")) ==
          without_timing(slurp(d2 / "simulate.txt")));

    // plan sweep: thread count does not affect the table
    const fs::path cfgP = write_config("det_plan.json", R"({
  "sweep": {"ratios": [0.5, 1.5], "powers": [300], "masses_amu": [1e8, 1e10],
            "lengths": ["50 um", "200 um"]}
})");
    const fs::path p1 = scratch_root() / "det_plan1";
    const fs::path p2 = scratch_root() / "det_plan2";
    REQUIRE(run_cli("--config " + cfgP.string() + " --threads 2 --out " + p1.string() +
                    " plan")
                .code == 0);
    REQUIRE(run_cli("--config " + cfgP.string() + " --threads 8 --out " + p2.string() +
                    " plan")
                .code == 0);
    CHECK(slurp(p1 / "sweep_table.csv") == slurp(p2 / "sweep_table.csv"));
}

TEST_CASE("exit codes separate user error from environment error") {
    // invalid physics in the config: user error
    const fs::path bad_geom =
        write_config("bad_geom.json", R"({"geometry": {"length": "3 mm"}})");
    const RunResult r1 = run_cli("--config " + bad_geom.string() + " design");
    CHECK(r1.code == 2);
    CHECK_THAT(r1.output, ContainsSubstring("error:"));
    CHECK_THAT(r1.output, ContainsSubstring("L < 2R"));

    // typo in a key: user error with the offending name
    const fs::path typo = write_config("typo.json", R"({"geomtry": {}})");
    const RunResult r2 = run_cli("--config " + typo.string() + " design");
    CHECK(r2.code == 2);
    CHECK_THAT(r2.output, ContainsSubstring("geomtry"));

    // malformed JSON: user error
    const fs::path broken = write_config("broken.json", "{ not json");
    CHECK(run_cli("--config " + broken.string() + " design").code == 2);

    // missing config file: environment error
    CHECK(run_cli("--config /no/such/config.json design").code == 4);

    // unreadable analysis input: environment error
    CHECK(run_cli("analyze /no/such/trace.csv").code == 4);
    const fs::path garbage = write_config("garbage.csv", "what even is this\n");
    const RunResult r3 = run_cli("analyze " + garbage.string());
    CHECK(r3.code == 4);
    CHECK_THAT(r3.output, ContainsSubstring("format"));
    const fs::path alien =
        write_config("alien.csv", "# format: somebody-else/3\na,b\n1,2\n");
    CHECK(run_cli("analyze " + alien.string()).code == 4);
}

TEST_CASE("analyzing a quiet trace reports zero events") {
    // constant baseline column: detection has nothing to find
    std::ostringstream trace;
    trace << "# format: microcav-trace/1\n# sample_rate: 100000000\n"
          << "# noise_sigma: 0.024\n# baseline: 0.1589\ntime_s,transmission\n";
    for (int i = 0; i < 200; ++i) trace << i * 1e-8 << ",0.1589\n";
    const fs::path quiet = write_config("quiet_trace.csv", trace.str());

    const fs::path out = scratch_root() / "quiet_an";
    const RunResult r = run_cli("--out " + out.string() + " analyze " + quiet.string());
    REQUIRE(r.code == 0);
    const std::string rec = slurp(out / "analysis.txt");
    CHECK_THAT(rec, ContainsSubstring("events: 0"));
    CHECK_THAT(rec, ContainsSubstring("total_events: 0"));
}
