#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "pohedge/errors.hpp"
#include "pohedge/io.hpp"
#include "pohedge/scenario.hpp"

using namespace pohedge;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

fs::path scratch(const std::string& name) {
    auto d = fs::temp_directory_path() / ("pohedge_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int run_cli(const std::string& args) {
    int rc = std::system((std::string(POHEDGE_CLI) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string scenario(const std::string& name) { return std::string(POHEDGE_SCENARIO_DIR) + "/" + name + ".toml"; }

// Walks a JSON tree and reports the first non-finite number.
bool all_finite(const Json& j) {
    if (j.is_number_float()) return std::isfinite(j.get<double>());
    if (j.is_structured())
        for (const auto& v : j)
            if (!all_finite(v)) return false;
    return true;
}

}  // namespace

TEST_CASE("config: n_paths = 0 is rejected") {
    fixture::Run r;
    r.n_paths = 0;
    auto msg = config_error(fixture::toml(fixture::kBlackScholes, r));
    CHECK(msg.find("run.n_paths must be >= 1") != std::string::npos);
}

TEST_CASE("config: every missing key is listed at once") {
    auto msg = config_error(R"~([model]
kind = "diffusion"
sigma1 = 0.2
[claim]
strike = 100.0
[run]
seed = 1
)~");
    for (const char* key : {"model.s0", "model.mu1", "claim.type", "grids.T", "grids.n_steps", "run.n_paths"})
        CHECK_MESSAGE(msg.find(key) != std::string::npos, key);
}

TEST_CASE("config: bad values and model violations") {
    CHECK(config_error("[model]\nkind = \"levy\"\n").find("model.kind") != std::string::npos);
    auto bad = std::string(fixture::kBlackScholes);
    bad.replace(bad.find("sigma1 = 0.2"), 12, "sigma1 = -0.2");
    CHECK(config_error(fixture::toml(bad)).find("sigma1") != std::string::npos);
    CHECK(config_error("not = [toml").size() > 0);
}

TEST_CASE("config: hash follows text and seed") {
    auto text = fixture::toml(fixture::kBlackScholes);
    auto a = parse_config(text), b = parse_config(text);
    CHECK(a.hash == b.hash);
    CHECK(a.hash_hex().size() == 16);
    CHECK(parse_config(text, "x", 999).hash != a.hash);
    CHECK(parse_config(text + "\n# comment\n").hash != a.hash);
    CHECK(parse_config(text, "x", 999).seed == 999);
}

TEST_CASE("numbers are written in shortest round-trip form") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 123456789.125, 0.0}) CHECK(std::stod(format_number(v)) == v);
    CHECK(format_number(0.5) == "0.5");
}

TEST_CASE("paths dump round-trips") {
    auto cfg = fixture::config(fixture::kTwoStateJump);
    auto paths = simulate_paths(cfg.spec, cfg.grid, Measure::P, 8, cfg.seed);
    auto dir = scratch("paths");
    write_paths_csv((dir / "paths.csv").string(), cfg.hash_hex(), paths);
    auto first = read_file(dir / "paths.csv");
    CHECK(first.rfind("# config_hash=" + cfg.hash_hex(), 0) == 0);
    CHECK(first.find("path_id,step,t,x,s,dW0,dW1,jump_mark") != std::string::npos);

    auto back = read_paths_csv((dir / "paths.csv").string(), cfg.spec, cfg.grid, cfg.seed);
    REQUIRE(back.size() == paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        CHECK(back[i].x == paths[i].x);
        CHECK(back[i].s == paths[i].s);
        CHECK(back[i].dW1 == paths[i].dW1);
        CHECK(back[i].jump_mark == paths[i].jump_mark);
        CHECK(back[i].obs_z == paths[i].obs_z);
    }
    fs::remove_all(dir);
}

TEST_CASE("reports are reproducible") {
    // timing lives in its own file, so the whole report must match
    auto cfg = load_config(scenario("bs_complete"));
    cfg.n_paths = 150;
    auto a = report_json(cfg, run_pipeline(cfg));
    cfg.workers = 2;
    auto b = report_json(cfg, run_pipeline(cfg));
    CHECK(a.dump() == b.dump());
}

TEST_CASE("jump scenario report carries finite diagnostics") {
    auto cfg = load_config(scenario("twostate_jump"));
    cfg.n_paths = 200;
    PipelineOptions opt;
    auto j = report_json(cfg, run_pipeline(cfg, opt));
    REQUIRE(j.contains("hedging"));
    for (const char* key : {"var_cost_beta_H", "var_cost_beta_F", "var_cost_zero_hedge"})
        CHECK_MESSAGE(j["hedging"].contains(key), key);
    CHECK(all_finite(j));
}

TEST_CASE("verify: chain filter agrees with enumeration") {
    auto cfg = load_config(scenario("twostate_filter"));
    auto c = run_check("filter_oracle", cfg);
    CHECK(c.pass);
    for (const auto& it : c.items) CHECK(it.value <= 1e-10);
}

TEST_CASE("verify: zero tolerance fails") {
    auto cfg = load_config(scenario("bs_complete"));
    cfg.n_paths = 200;
    cfg.tolerance["bs_value"] = 0.0;
    auto v = verify(cfg, {"bs_value"});
    CHECK_FALSE(v.pass);
    CHECK_FALSE(verify_json(cfg, v)["pass"].get<bool>());
}

TEST_CASE("command line exit codes") {
    auto dir = scratch("cli");
    auto base = read_file(scenario("bs_complete"));

    auto zero = base;
    zero.replace(zero.find("n_paths = 2000"), 14, "n_paths = 0");
    std::ofstream(dir / "zero.toml") << zero;
    CHECK(run_cli("simulate --config " + (dir / "zero.toml").string() + " --out " + (dir / "o1").string()) == 2);

    auto tampered = base;
    tampered.replace(tampered.find("n_paths = 2000"), 14, "n_paths = 200");
    tampered += "tolerance = { bs_value = 0.0 }\n";
    std::ofstream(dir / "tampered.toml") << tampered;
    CHECK(run_cli("verify --config " + (dir / "tampered.toml").string() + " --checks bs_value --out " +
                  (dir / "o2").string()) == 3);
    CHECK(fs::exists(dir / "o2" / "verify.json"));

    CHECK(run_cli("report --config " + (dir / "missing.toml").string()) == 2);
    fs::remove_all(dir);
}
