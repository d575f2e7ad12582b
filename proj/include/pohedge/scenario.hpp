#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pohedge/config.hpp"
#include "pohedge/hedging.hpp"

namespace pohedge {

using Json = nlohmann::ordered_json;

// Everything one pipeline run produces. Stages fill what they reach.
struct PipelineResult {
    std::vector<PathSample> paths;
    std::vector<std::vector<FilterState>> filters_P, filters_star;
    std::optional<ValueSurface> surface;
    std::vector<StructureCoefficients> coeffs;
    std::vector<MeasurePath> densities;
    std::vector<StrategyPath> strategies;
    std::optional<HedgeReport> report;
    Json probes = Json::array();
    std::vector<std::pair<std::string, double>> seconds;  // wall time per stage
};

enum class Stage { Simulate, Filter, Price, Hedge };

struct PipelineOptions {
    Stage until = Stage::Hedge;
    bool probes = false;
    // Reuse a paths dump from an earlier stage when its hash matches.
    std::string reuse_dir;
};

PipelineResult run_pipeline(const ScenarioConfig& cfg, const PipelineOptions& opt = {});

// Dumps requested by the config's outputs toggles (force writes all).
void write_dumps(const ScenarioConfig& cfg, const PipelineResult& r, const std::string& dir, bool force = false);

Json report_json(const ScenarioConfig& cfg, const PipelineResult& r);
Json hedge_report_json(const HedgeReport& rep);

// PDE value against Feynman-Kac Monte Carlo at each probe point.
Json probe_values(const ScenarioConfig& cfg, const ValueSurface& surface);
std::vector<ProbePoint> default_probes(const ScenarioConfig& cfg);

struct CheckItem {
    std::string label;
    double value = 0.0;
    double se = 0.0;
    double bound = 0.0;
    bool pass = true;
};

struct CheckResult {
    std::string name;
    bool pass = true;
    std::vector<CheckItem> items;
    std::string note;
    double seconds = 0.0;
};

std::vector<std::string> available_checks();
std::vector<std::string> default_checks(const ScenarioConfig& cfg);

// cfg.tolerance[name] replaces the default bound of a check (an absolute
// error, a number of standard errors or a ratio, per check).
double tolerance_of(const ScenarioConfig& cfg, const std::string& name, double dflt);

CheckResult run_check(const std::string& name, const ScenarioConfig& cfg);

struct VerifyResult {
    std::vector<CheckResult> checks;
    bool pass = true;
};

VerifyResult verify(const ScenarioConfig& cfg, const std::vector<std::string>& names = {});
Json verify_json(const ScenarioConfig& cfg, const VerifyResult& v);
std::string verify_table(const VerifyResult& v);

// Black-Scholes call with zero rate.
double bs_call(double s, double K, double sigma, double T);
double bs_call_delta(double s, double K, double sigma, double T);

}  // namespace pohedge
