#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dh/cli.hpp"
#include "dh/config.hpp"
#include "dh/errors.hpp"
#include "dh/manifest.hpp"

using namespace dh;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

const char* cli_path() { return std::getenv("DH_CLI_PATH"); }

Result run_cmd(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " '" + std::string(cli_path()) + "' " + args + " 2>&1";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), p)) r.out += buf.data();
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("dh_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const char* kSmallConfig = R"([grid]
n_x = 16
n_t = 8

[params]
sigma_s = 0.4

[bbar]
model = ou

[experiment]
m_x = 64
T = 0.002
dt = 2e-4
n_snapshots = 2
ensemble = 2
eps_list = 0.25, 0.125
permutations = 20
paths = 200
horizon = 64
lag_max = 8
)";

fs::path write_config(const fs::path& dir) {
    auto p = dir / "run.ini";
    std::ofstream(p) << kSmallConfig;
    return p;
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("config parsing and canonical form") {
        RunConfig c = parse_config_text(kSmallConfig);
        CHECK(c.exp.grid.n_x == 16);
        CHECK(c.exp.bbar.model == BbarModel::ou);
        CHECK(c.exp.eps_list == std::vector<double>{0.25, 0.125});
        RunConfig back = parse_config_text(serialize_config(c));
        CHECK(back == c);
        CHECK(config_hash(back) == config_hash(c));
        CHECK(config_hash(c).size() == 16);
        CHECK(config_hash(c) != config_hash(RunConfig{}));
    }

    TEST_CASE("parse errors carry line and column") {
        try {
            parse_config_text("[grid]\nn_x = 16\n  bogus = 3\n");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 3);
            CHECK(e.column() == 3);
        }
        CHECK_THROWS_AS(parse_config_text("[grid]\nn_x = 16\nn_x = 32\n"), ParseError);
        CHECK_THROWS_AS(parse_config_text("[nowhere]\n"), ParseError);
        CHECK_THROWS_AS(parse_config_text("n_x = 16\n"), ParseError);
        CHECK_THROWS_AS(parse_config_text("[grid]\nn_x = sixteen\n"), ParseError);
        CHECK_NOTHROW(parse_config_text("# comment\n[grid] ; trailing\n; another\nn_x = 32\n"));
    }

    TEST_CASE("environment overrides") {
        RunConfig c = parse_config_text(kSmallConfig);
        apply_env_overrides(c, {{"DH_GRID_N_X", "32"}, {"DH_EXPERIMENT_EPS_LIST", "0.5,0.25"}, {"DH_SEED", "9"}});
        CHECK(c.exp.grid.n_x == 32);
        CHECK(c.exp.eps_list == std::vector<double>{0.5, 0.25});
        CHECK(c.exp.seed == 1);
        CHECK_THROWS_AS(apply_env_overrides(c, {{"DH_GRID_NOPE", "1"}}), ValidationError);
    }

    TEST_CASE("error json and exit codes") {
        CHECK(exit_code_for(UsageError("x")) == 2);
        CHECK(exit_code_for(ParseError("x", 1, 1)) == 3);
        CHECK(exit_code_for(ValidationError("x")) == 3);
        CHECK(exit_code_for(NonConvergence("x", {1.0})) == 4);
        CHECK(exit_code_for(IoError("x")) == 5);
        CHECK(exit_code_for(std::runtime_error("x")) == 1);
        auto j = nlohmann::json::parse(error_json(ParseError("bad", 4, 2), "clt"));
        CHECK(j["error"]["kind"] == "ParseError");
        CHECK(j["error"]["line"] == 4);
        CHECK(j["error"]["subcommand"] == "clt");
    }

    TEST_CASE("unknown subcommand exits with 2 and a json error") {
        REQUIRE(cli_path() != nullptr);
        auto r = run_cmd("frobnicate");
        CHECK(r.code == 2);
        auto j = nlohmann::json::parse(r.out);
        CHECK(j.contains("error"));
        CHECK(run_cmd("").code == 2);
    }

    TEST_CASE("bad config file exits with 3, missing file with 5") {
        REQUIRE(cli_path() != nullptr);
        auto dir = scratch("badcfg");
        std::ofstream(dir / "bad.ini") << "[grid]\nn_x = 16\nwhat = 1\n";
        auto r = run_cmd("generate-env --config " + (dir / "bad.ini").string() + " --out " + (dir / "o").string());
        CHECK(r.code == 3);
        auto j = nlohmann::json::parse(r.out);
        CHECK(j["error"]["line"] == 3);
        CHECK(run_cmd("generate-env --config " + (dir / "missing.ini").string()).code == 5);
    }

    TEST_CASE("every subcommand writes a manifest listing its outputs") {
        REQUIRE(cli_path() != nullptr);
        auto dir = scratch("all");
        auto cfg = write_config(dir);
        for (const auto& sc : subcommands()) {
            auto out = dir / sc;
            auto r = run_cmd(sc + " --config " + cfg.string() + " --out " + out.string() + " --workers 2");
            INFO(sc, ": ", r.out);
            CHECK(r.code == 0);
            auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
            CHECK(m["subcommand"] == sc);
            std::size_t listed = 0;
            for (const auto& o : m["outputs"]) {
                CHECK(fs::exists(out / o["path"].get<std::string>()));
                ++listed;
            }
            std::size_t on_disk = 0;
            for (const auto& e : fs::directory_iterator(out))
                if (e.path().filename() != "manifest.json") ++on_disk;
            CHECK(listed == on_disk);
        }
        CHECK(fs::exists(dir / "homogenize" / "report.csv"));
        auto header = slurp(dir / "homogenize" / "report.csv");
        CHECK(header.rfind("eps,realization,probe,value_eps,value_limit,pathwise_error", 0) == 0);
    }

    TEST_CASE("flags override environment which overrides the file") {
        REQUIRE(cli_path() != nullptr);
        auto dir = scratch("prec");
        auto cfg = write_config(dir);
        run_cmd("generate-env --config " + cfg.string() + " --out " + (dir / "a").string(), "DH_SEED=7");
        auto a = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
        CHECK(a["base_seed"] == 7);
        run_cmd("generate-env --config " + cfg.string() + " --out " + (dir / "b").string() + " --seed 11", "DH_SEED=7");
        auto b = nlohmann::json::parse(slurp(dir / "b" / "manifest.json"));
        CHECK(b["base_seed"] == 11);
        run_cmd("generate-env --config " + cfg.string() + " --out " + (dir / "c").string(), "DH_GRID_N_X=32");
        RunConfig c = parse_config(((dir / "c") / "config.ini").string());
        CHECK(c.exp.grid.n_x == 32);
    }

    TEST_CASE("reruns are byte identical") {
        REQUIRE(cli_path() != nullptr);
        auto dir = scratch("det");
        auto cfg = write_config(dir);
        for (const char* sc : {"generate-env", "homogenize"}) {
            auto a = dir / (std::string(sc) + "_1"), b = dir / (std::string(sc) + "_2");
            CHECK(run_cmd(std::string(sc) + " --config " + cfg.string() + " --out " + a.string() + " --workers 2").code == 0);
            CHECK(run_cmd(std::string(sc) + " --config " + cfg.string() + " --out " + b.string() + " --workers 2").code == 0);
            for (const auto& e : fs::directory_iterator(a)) {
                const auto name = e.path().filename();
                if (name == "manifest.json" || name == "timing.json") continue;
                CHECK_MESSAGE(slurp(e.path()) == slurp(b / name), name.string());
            }
        }
    }
}
