#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>
#include <sys/wait.h>

#include <json.hpp>

#include "timfg/config.hpp"
#include "timfg/errors.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

std::string binary() {
    if (const char* bin = std::getenv("TIMFG_BIN")) return bin;
#ifdef TIMFG_BIN
    return TIMFG_BIN;
#else
    FAIL("set TIMFG_BIN to the CLI binary path");
    return "";
#endif
}

RunResult run(const std::string& args, const std::string& env_prefix = "") {
    const std::string cmd = env_prefix + binary() + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult res;
    char buf[4096];
    while (std::fgets(buf, sizeof(buf), pipe) != nullptr) res.output += buf;
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("timfg_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

std::string drop_last_column(const std::string& text) {
    std::string out;
    for (const auto& line : lines_of(text)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
}

} // namespace

TEST_CASE("selftest passes") {
    const RunResult res = run("selftest");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("FAIL") == std::string::npos);
    CHECK(res.output.find("ok") != std::string::npos);
}

TEST_CASE("help lists every subcommand") {
    const RunResult res = run("--help");
    CHECK(res.exit_code == 0);
    for (const char* name : {"pia", "vanish", "verify", "mc-check", "selftest"})
        CHECK(res.output.find(name) != std::string::npos);
    CHECK(run("").exit_code != 0);
}

TEST_CASE("the decoupled benchmark converges at the second sweep") {
    const fs::path dir = fresh_dir("decoupled");
    const RunResult res =
        run("pia --model decoupled --n-time 40 --n-space 200 --out " + dir.string());
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("iters=2") != std::string::npos);
    CHECK(res.output.find("converged") != std::string::npos);

    for (const char* f :
         {"convergence.csv", "diagonal.csv", "density.csv", "value_slice.csv",
          "resolved_config.json"})
        CHECK(fs::exists(dir / f));

    const auto conv = lines_of(slurp(dir / "convergence.csv"));
    REQUIRE(conv.size() == 3);
    CHECK(conv[0] == "k,d_m,d_J,ratio,seconds");
    CHECK(conv[1].rfind("1,", 0) == 0);
    CHECK(conv[2].rfind("2,0,0,0,", 0) == 0);

    CHECK(lines_of(slurp(dir / "diagonal.csv"))[0] == "t,x,J,DxJ");
    CHECK(lines_of(slurp(dir / "density.csv"))[0] == "t,x,p");
    const auto vs = lines_of(slurp(dir / "value_slice.csv"));
    CHECK(vs[0] == "t,s,x,V");
    CHECK(vs.size() == 1 + 41 * 201);
}

TEST_CASE("the halving schedule writes one row per regularization level") {
    const fs::path dir = fresh_dir("vanish");
    const RunResult res = run("vanish --n-time 12 --n-space 32 --n-action 12 --tol 1e-5"
                              " --halvings 3 --out " +
                              dir.string());
    CHECK(res.exit_code == 0);
    const auto rows = lines_of(slurp(dir / "vanishing.csv"));
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == "lambda,max_lambda_entropy,J_gap,m_gap,residual,iters");
    CHECK(rows[1].rfind("0.5,", 0) == 0);
    CHECK(rows[2].rfind("0.25,", 0) == 0);
    CHECK(rows[3].rfind("0.125,", 0) == 0);
    CHECK(rows[4].rfind("0.0625,", 0) == 0);
    CHECK(rows[1].find("nan") != std::string::npos);
}

TEST_CASE("config file values load and explicit flags win") {
    const fs::path dir = fresh_dir("config");
    const fs::path cfg_path = dir / "run.json";
    {
        std::ofstream out(cfg_path);
        out << R"({"model":{"name":"decoupled","horizon":0.25},)"
            << R"("grid":{"n_time":8,"n_space":24,"n_action":8},)"
            << R"("tol":1e-5,"out_dir":")" << (dir / "ignored").string() << R"("})";
    }
    const fs::path out_dir = dir / "real";
    const RunResult res = run("pia --config " + cfg_path.string() + " --n-time 10 --out " +
                              out_dir.string());
    CHECK(res.exit_code == 0);
    const nlohmann::json resolved = nlohmann::json::parse(slurp(out_dir / "resolved_config.json"));
    CHECK(resolved["model"]["name"] == "decoupled");
    CHECK(resolved["grid"]["n_time"] == 10);
    CHECK(resolved["grid"]["n_space"] == 24);
    CHECK(resolved["tol"] == 1e-5);
    CHECK(resolved["out_dir"] == out_dir.string());
    CHECK_FALSE(fs::exists(dir / "ignored"));
}

TEST_CASE("config problems exit with status 2") {
    const fs::path dir = fresh_dir("badconfig");
    const fs::path bad_key = dir / "bad_key.json";
    std::ofstream(bad_key) << R"({"grids":{"n_time":8}})";
    RunResult res = run("pia --config " + bad_key.string());
    CHECK(res.exit_code == 2);
    CHECK(res.output.find("unknown key") != std::string::npos);

    const fs::path bad_type = dir / "bad_type.json";
    std::ofstream(bad_type) << R"({"grid":{"n_time":"many"}})";
    CHECK(run("pia --config " + bad_type.string()).exit_code == 2);

    CHECK(run("pia --config " + (dir / "missing.json").string()).exit_code == 2);
    CHECK(run("pia --model not_a_model --out " + (dir / "o").string()).exit_code == 2);
}

TEST_CASE("non-convergence exits 3 unless explicitly allowed") {
    const fs::path dir = fresh_dir("nonconv");
    const std::string base = "pia --n-time 10 --n-space 32 --n-action 12 --max-iters 1 --out ";
    const RunResult strict = run(base + (dir / "a").string());
    CHECK(strict.exit_code == 3);
    CHECK(strict.output.find("NOT CONVERGED") != std::string::npos);
    CHECK(fs::exists(dir / "a" / "convergence.csv"));
    const RunResult relaxed = run(base + (dir / "b").string() + " --allow-nonconverged");
    CHECK(relaxed.exit_code == 0);
}

TEST_CASE("byte-identical artifacts for any worker count") {
    const fs::path dir = fresh_dir("threads");
    const std::string base = "pia --model decoupled --n-time 12 --n-space 48 --n-action 8 --out ";
    CHECK(run(base + (dir / "t1").string() + " --threads 1").exit_code == 0);
    CHECK(run(base + (dir / "t3").string() + " --threads 3").exit_code == 0);
    CHECK(run(base + (dir / "env").string(), "TIMFG_THREADS=2 ").exit_code == 0);

    for (const char* f : {"diagonal.csv", "density.csv", "value_slice.csv"}) {
        const std::string a = slurp(dir / "t1" / f);
        CHECK(a == slurp(dir / "t3" / f));
        CHECK(a == slurp(dir / "env" / f));
    }
    CHECK(drop_last_column(slurp(dir / "t1" / "convergence.csv")) ==
          drop_last_column(slurp(dir / "t3" / "convergence.csv")));
}

TEST_CASE("the sampler report is deterministic and well formed") {
    const fs::path dir = fresh_dir("mc");
    const std::string base = "mc-check --model decoupled --n-time 10 --n-space 30 --n-action 8"
                             " --n-particles 20000 --n-paths 4000 --seed 7 --out ";
    CHECK(run(base + (dir / "a").string() + " --threads 1").exit_code == 0);
    CHECK(run(base + (dir / "b").string() + " --threads 3").exit_code == 0);
    const std::string report = slurp(dir / "a" / "mc_report.csv");
    CHECK(report == slurp(dir / "b" / "mc_report.csv"));
    const auto rows = lines_of(report);
    REQUIRE(rows.size() == 14);
    CHECK(rows[0] == "query,estimate,stderr,n,seed");
    CHECK(rows[13].rfind("terminal_flow_w2,", 0) == 0);
    int pde_rows = 0;
    for (const auto& row : rows)
        if (row.rfind("pde_", 0) == 0) ++pde_rows;
    CHECK(pde_rows == 6);
}

TEST_CASE("the audit command persists residuals, deviations, and bound checks") {
    const fs::path dir = fresh_dir("verify");
    const RunResult res = run("verify --model decoupled --n-time 10 --n-space 40 --n-action 8"
                              " --out " +
                              dir.string());
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("lemmas=pass") != std::string::npos);

    const auto residual = lines_of(slurp(dir / "residual.csv"));
    CHECK(residual[0] == "t,s,x,residual");
    // one row per interior node of the triangle: sum_{j_t} (n_time - j_t) * (n_space - 1)
    CHECK(residual.size() == 1 + (10 * 11 / 2) * 39);

    const auto deviation = lines_of(slurp(dir / "deviation.csv"));
    CHECK(deviation[0] == "t,x,candidate,eps,gain,std_error,method");
    CHECK(deviation.size() == 1 + 9 * 6 * 2);

    const auto lemmas = lines_of(slurp(dir / "lemmas.csv"));
    CHECK(lemmas[0] == "check,probe,value,bound,pass");
    for (std::size_t i = 1; i < lemmas.size(); ++i)
        CHECK(lemmas[i].substr(lemmas[i].rfind(',') + 1) == "1");
}

TEST_CASE("config parsing applies nested keys and rejects junk in process") {
    using timfg::RunConfig;
    RunConfig cfg;
    timfg::apply_config_json(
        nlohmann::json::parse(R"({"model":{"name":"timeconsistent","horizon":0.5},)"
                              R"("grid":{"n_space":64},"mc":{"n_paths":5000},)"
                              R"("nu":{"mean":0.1},"threads":2,"allow_nonconverged":true})"),
        cfg);
    CHECK(cfg.model_name == "timeconsistent");
    CHECK(cfg.horizon == 0.5);
    CHECK(cfg.n_space == 64);
    CHECK(cfg.n_time == 40);
    CHECK(cfg.n_paths == 5000);
    CHECK(cfg.nu_mean == 0.1);
    CHECK(cfg.threads == 2);
    CHECK(cfg.allow_nonconverged);

    CHECK_THROWS_AS(timfg::apply_config_json(nlohmann::json::parse(R"({"nu":{"sigma":1}})"), cfg),
                    timfg::ConfigError);
    CHECK_THROWS_AS(timfg::apply_config_json(nlohmann::json::parse(R"(["not","an","object"])"),
                                             cfg),
                    timfg::ConfigError);
    CHECK_THROWS_AS(timfg::apply_config_json(nlohmann::json::parse(R"({"tol":"tight"})"), cfg),
                    timfg::ConfigError);
}
