#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pohedge/filtering.hpp"
#include "pohedge/model.hpp"
#include "pohedge/pricing.hpp"

namespace pohedge {

struct OutputsConfig {
    std::string dir = "out";
    bool paths = false;
    bool filters = false;
    bool strategies = false;
    bool surface = false;
    bool structure = false;
};

struct ProbePoint {
    double t = 0.0;
    std::optional<double> x;  // absent: start from the prior
    double s = 100.0;
};

struct ScenarioConfig {
    std::string name;
    std::string source;  // raw config text, hashed
    ModelSpec spec;
    ClaimSpec claim;
    TimeGrid grid;
    PricingGrids pricing;
    int n_paths = 0;
    std::uint64_t seed = 0;
    Measure measure = Measure::P;  // measure of the simulate subcommand
    FilterRunOptions filter;
    OutputsConfig outputs;
    std::vector<ProbePoint> probes;
    int probe_mc_paths = 20000;
    std::vector<std::string> checks;
    std::map<std::string, double> tolerance;
    std::uint64_t hash = 0;
    int workers = 0;

    std::string hash_hex() const;
};

// FNV-1a over the config bytes and the effective seed.
std::uint64_t config_hash(const std::string& text, std::uint64_t seed);

// Throws ConfigError listing every missing or malformed key, and every
// model violation found by validate_spec.
ScenarioConfig parse_config(const std::string& text, const std::string& name = "inline",
                            std::optional<std::uint64_t> seed_override = std::nullopt);
ScenarioConfig load_config(const std::string& path,
                           std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace pohedge
