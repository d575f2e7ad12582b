#include "pohedge/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "pohedge/errors.hpp"

namespace pohedge {

std::string ScenarioConfig::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

std::uint64_t config_hash(const std::string& text, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto eat = [&](unsigned char c) {
        h ^= c;
        h *= 0x100000001b3ull;
    };
    for (unsigned char c : text) eat(c);
    for (int k = 0; k < 8; ++k) eat(static_cast<unsigned char>(seed >> (8 * k)));
    return h;
}

namespace {

// Collects every problem so one error lists them all.
class Reader {
public:
    explicit Reader(const toml::table& root) : root_(root) {}

    const toml::node* find(const std::string& path) const {
        auto v = root_.at_path(path);
        return v.node();
    }
    bool has(const std::string& path) const { return find(path) != nullptr; }

    double number(const std::string& path, std::optional<double> dflt = std::nullopt) {
        const auto* n = find(path);
        if (!n) {
            if (!dflt) missing_.push_back(path);
            return dflt.value_or(0.0);
        }
        if (auto v = n->value<double>()) return *v;
        bad(path, "expected a number");
        return 0.0;
    }

    std::optional<double> optional_number(const std::string& path) {
        if (!has(path)) return std::nullopt;
        return number(path);
    }

    long long integer(const std::string& path, std::optional<long long> dflt = std::nullopt) {
        const auto* n = find(path);
        if (!n) {
            if (!dflt) missing_.push_back(path);
            return dflt.value_or(0);
        }
        if (auto v = n->value<long long>()) return *v;
        bad(path, "expected an integer");
        return 0;
    }

    std::string string(const std::string& path, std::optional<std::string> dflt = std::nullopt) {
        const auto* n = find(path);
        if (!n) {
            if (!dflt) missing_.push_back(path);
            return dflt.value_or("");
        }
        if (auto v = n->value<std::string>()) return *v;
        bad(path, "expected a string");
        return "";
    }

    bool boolean(const std::string& path, bool dflt) {
        const auto* n = find(path);
        if (!n) return dflt;
        if (auto v = n->value<bool>()) return *v;
        bad(path, "expected true or false");
        return dflt;
    }

    // Number or expression string.
    Expression expression(const std::string& path, const std::map<std::string, double>& params,
                          std::optional<std::string> dflt = std::nullopt) {
        const auto* n = find(path);
        if (!n) {
            if (!dflt) {
                missing_.push_back(path);
                return Expression::constant(0.0);
            }
            return Expression::parse(*dflt, params);
        }
        return expression_of(*n, path, params);
    }

    Expression expression_of(const toml::node& n, const std::string& path,
                             const std::map<std::string, double>& params) {
        if (auto v = n.value<double>()) return Expression::constant(*v);
        if (auto s = n.value<std::string>()) {
            try {
                return Expression::parse(*s, params);
            } catch (const ConfigError& e) {
                bad(path, e.what());
                return Expression::constant(0.0);
            }
        }
        bad(path, "expected a number or an expression string");
        return Expression::constant(0.0);
    }

    std::vector<double> numbers(const std::string& path, bool required = true) {
        std::vector<double> out;
        const auto* n = find(path);
        if (!n) {
            if (required) missing_.push_back(path);
            return out;
        }
        const auto* arr = n->as_array();
        if (!arr) {
            bad(path, "expected an array of numbers");
            return out;
        }
        for (std::size_t i = 0; i < arr->size(); ++i) {
            auto v = arr->get(i)->value<double>();
            if (!v) {
                bad(path, "expected an array of numbers");
                return {};
            }
            out.push_back(*v);
        }
        return out;
    }

    void bad(const std::string& path, const std::string& why) { bad_.push_back(path + ": " + why); }

    void finish() const {
        if (missing_.empty() && bad_.empty()) return;
        std::ostringstream os;
        os << "invalid configuration";
        if (!missing_.empty()) {
            os << "; missing keys:";
            for (const auto& m : missing_) os << " " << m;
        }
        for (const auto& b : bad_) os << "; " << b;
        throw ConfigError(os.str());
    }

private:
    const toml::table& root_;
    std::vector<std::string> missing_;
    std::vector<std::string> bad_;
};

ModelKind parse_kind(const std::string& s, Reader& r) {
    if (s == "diffusion") return ModelKind::Diffusion;
    if (s == "pure_jump") return ModelKind::PureJump;
    if (s == "jump_diffusion") return ModelKind::JumpDiffusion;
    r.bad("model.kind", "expected diffusion, pure_jump or jump_diffusion");
    return ModelKind::Diffusion;
}

std::vector<Expression> per_mark(Reader& r, const std::string& path, std::size_t m,
                                 const std::map<std::string, double>& params) {
    std::vector<Expression> out;
    const auto* n = r.find(path);
    if (!n) return std::vector<Expression>(m, Expression::constant(0.0));
    if (const auto* arr = n->as_array()) {
        if (arr->size() != m) r.bad(path, "needs one entry per mark");
        for (std::size_t j = 0; j < arr->size(); ++j)
            out.push_back(r.expression_of(*arr->get(j), path + "[" + std::to_string(j) + "]", params));
        return out;
    }
    auto e = r.expression_of(*n, path, params);
    return std::vector<Expression>(m, e);
}

ClaimSpec parse_claim(Reader& r, const std::map<std::string, double>& params) {
    ClaimSpec c;
    std::string type = r.string("claim.type");
    double scale = r.number("claim.scale", 1.0);
    if (type == "call") {
        c = ClaimSpec::call(r.number("claim.strike"));
    } else if (type == "put") {
        c = ClaimSpec::put(r.number("claim.strike"));
    } else if (type == "digital") {
        c = ClaimSpec::digital(r.number("claim.strike"));
    } else if (type == "identity") {
        c = ClaimSpec::identity();
    } else if (type == "constant") {
        c = ClaimSpec::constant(r.number("claim.value"));
    } else if (type == "custom") {
        c.kind = ClaimSpec::Kind::Custom;
        c.custom = r.expression("claim.payoff", params);
    } else if (!type.empty()) {
        r.bad("claim.type", "expected call, put, digital, identity, constant or custom");
    }
    c.scale = scale;
    return c;
}

}  // namespace

ScenarioConfig parse_config(const std::string& text, const std::string& name,
                            std::optional<std::uint64_t> seed_override) {
    toml::table root;
    try {
        root = toml::parse(text, name);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "config parse error in " << name << " at line " << e.source().begin.line << ": "
           << e.description();
        throw ConfigError(os.str());
    }
    Reader r(root);
    ScenarioConfig cfg;
    cfg.name = name;
    cfg.source = text;

    std::map<std::string, double> params;
    if (const auto* p = root.at_path("model.params").as_table()) {
        for (const auto& [k, v] : *p) {
            if (auto d = v.value<double>())
                params[std::string(k.str())] = *d;
            else
                r.bad("model.params." + std::string(k.str()), "expected a number");
        }
    }

    auto& spec = cfg.spec;
    spec.kind = parse_kind(r.string("model.kind"), r);
    spec.s0 = r.number("model.s0");
    spec.x0 = r.number("model.x0", 0.0);
    spec.x0_sd = r.number("model.x0_sd", 0.0);
    auto& k = spec.coeff;
    k.rho = r.number("model.rho", 0.0);
    if (spec.kind != ModelKind::PureJump) {
        k.mu1 = r.expression("model.mu1", params);
        k.sigma1 = r.expression("model.sigma1", params);
    } else {
        k.mu1 = r.expression("model.mu1", params, "0");
        k.sigma1 = r.expression("model.sigma1", params, "0");
    }
    k.bounds.c1 = r.optional_number("model.bounds.c1");
    k.bounds.c2 = r.optional_number("model.bounds.c2");
    k.bounds.c3 = r.optional_number("model.bounds.c3");
    k.bounds.c4 = r.optional_number("model.bounds.c4");

    if (r.has("model.signal")) {
        SignalChain ch;
        ch.states = r.numbers("model.signal.states");
        ch.prior = r.numbers("model.signal.prior");
        const auto* g = r.find("model.signal.generator");
        const std::size_t d = ch.states.size();
        ch.generator = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        if (!g || !g->as_array()) {
            r.bad("model.signal.generator", "expected a square array of rows");
        } else {
            const auto& rows = *g->as_array();
            if (rows.size() != d) r.bad("model.signal.generator", "needs one row per state");
            for (std::size_t i = 0; i < rows.size() && i < d; ++i) {
                const auto* row = rows.get(i)->as_array();
                if (!row || row->size() != d) {
                    r.bad("model.signal.generator", "rows must have one entry per state");
                    continue;
                }
                for (std::size_t j = 0; j < d; ++j) {
                    auto v = row->get(j)->value<double>();
                    if (!v) r.bad("model.signal.generator", "entries must be numbers");
                    ch.generator(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v.value_or(0.0);
                }
            }
        }
        spec.chain = std::move(ch);
        k.mu0 = Expression::constant(0.0);
        k.sigma0 = Expression::constant(0.0);
        if (spec.chain->states.size() && spec.state_index(spec.x0) < 0) spec.x0 = spec.chain->states[0];
    } else {
        k.mu0 = r.expression("model.mu0", params);
        k.sigma0 = r.expression("model.sigma0", params);
    }

    if (spec.kind != ModelKind::Diffusion) {
        spec.marks.eta = r.numbers("model.marks.eta");
        spec.marks.zeta = r.numbers("model.marks.zeta", false);
        const std::size_t m = spec.marks.eta.size();
        if (spec.marks.zeta.empty())
            for (std::size_t j = 0; j < m; ++j) spec.marks.zeta.push_back(static_cast<double>(j + 1));
        if (spec.marks.zeta.size() != m) r.bad("model.marks.zeta", "needs one entry per eta weight");
        k.K0 = per_mark(r, "model.marks.K0", m, params);
        k.K1 = per_mark(r, "model.marks.K1", m, params);
        if (!r.has("model.marks.K1")) r.bad("model.marks.K1", "required for jump models");
    }
    spec.lattice.t = r.numbers("model.lattice.t", false);
    spec.lattice.x = r.numbers("model.lattice.x", false);
    spec.lattice.s = r.numbers("model.lattice.s", false);

    cfg.claim = parse_claim(r, params);

    double T = r.number("grids.T");
    long long N = r.integer("grids.n_steps");
    cfg.pricing.s_points = static_cast<int>(r.integer("grids.s_points", 401));
    cfg.pricing.s_width = r.number("grids.s_width", 0.0);
    cfg.pricing.substeps = static_cast<int>(r.integer("grids.substeps", 4));
    cfg.pricing.x_points = static_cast<int>(r.integer("grids.x_points", 61));
    cfg.pricing.x_min = r.optional_number("grids.x_min");
    cfg.pricing.x_max = r.optional_number("grids.x_max");

    cfg.n_paths = static_cast<int>(r.integer("run.n_paths"));
    if (const auto* sn = r.find("run.seed")) {
        if (auto v = sn->value<long long>())
            cfg.seed = static_cast<std::uint64_t>(*v);
        else if (auto s = sn->value<std::string>())
            cfg.seed = std::stoull(*s, nullptr, 0);
        else
            r.bad("run.seed", "expected an integer");
    } else {
        r.number("run.seed");  // registers the missing key
    }
    std::string meas = r.string("run.measure", "P");
    if (meas == "P")
        cfg.measure = Measure::P;
    else if (meas == "Pstar")
        cfg.measure = Measure::Pstar;
    else
        r.bad("run.measure", "expected P or Pstar");

    std::string eng = r.string("engines.filter", spec.finite_state() ? "exact" : "particle");
    if (eng == "exact")
        cfg.filter.engine = FilterEngine::Exact;
    else if (eng == "particle")
        cfg.filter.engine = FilterEngine::Particle;
    else
        r.bad("engines.filter", "expected exact or particle");
    cfg.filter.particle.n_particles = static_cast<int>(r.integer("engines.particles", 1000));
    cfg.filter.particle.ess_threshold = r.number("engines.ess_threshold", 0.5);

    cfg.outputs.dir = r.string("outputs.dir", "out");
    cfg.outputs.paths = r.boolean("outputs.dump_paths", false);
    cfg.outputs.filters = r.boolean("outputs.dump_filters", false);
    cfg.outputs.strategies = r.boolean("outputs.dump_strategies", false);
    cfg.outputs.surface = r.boolean("outputs.dump_surface", false);
    cfg.outputs.structure = r.boolean("outputs.dump_structure", false);

    if (const auto* pts = r.find("probes.points")) {
        const auto* arr = pts->as_array();
        if (!arr) r.bad("probes.points", "expected an array of [t, s] or [t, x, s]");
        for (std::size_t i = 0; arr && i < arr->size(); ++i) {
            const auto* p = arr->get(i)->as_array();
            std::vector<double> v;
            for (std::size_t j = 0; p && j < p->size(); ++j) v.push_back(p->get(j)->value<double>().value_or(NAN));
            if (v.size() == 2)
                cfg.probes.push_back({v[0], std::nullopt, v[1]});
            else if (v.size() == 3)
                cfg.probes.push_back({v[0], v[1], v[2]});
            else
                r.bad("probes.points", "each point is [t, s] or [t, x, s]");
        }
    }
    cfg.probe_mc_paths = static_cast<int>(r.integer("probes.mc_paths", 20000));

    if (const auto* c = r.find("verify.checks")) {
        const auto* arr = c->as_array();
        for (std::size_t i = 0; arr && i < arr->size(); ++i)
            if (auto s = arr->get(i)->value<std::string>()) cfg.checks.push_back(*s);
        if (!arr) r.bad("verify.checks", "expected an array of check names");
    }
    if (const auto* tt = root.at_path("verify.tolerance").as_table()) {
        for (const auto& [key, v] : *tt) {
            if (auto d = v.value<double>())
                cfg.tolerance[std::string(key.str())] = *d;
            else
                r.bad("verify.tolerance." + std::string(key.str()), "expected a number");
        }
    }
    r.finish();

    if (!(T > 0.0)) throw ConfigError("grids.T must be positive");
    if (N < 1) throw ConfigError("grids.n_steps must be >= 1");
    cfg.grid = TimeGrid(T, static_cast<int>(N));
    if (cfg.n_paths < 1) throw ConfigError("run.n_paths must be >= 1");
    if (cfg.filter.particle.n_particles < 1) throw ConfigError("engines.particles must be >= 1");
    if (cfg.filter.engine == FilterEngine::Exact && !spec.finite_state())
        throw ConfigError("engines.filter = exact needs a [model.signal] chain");
    if (seed_override) cfg.seed = *seed_override;
    cfg.filter.seed = cfg.seed;

    auto violations = validate_spec(spec);
    if (!violations.empty()) {
        std::ostringstream os;
        os << "model fails validation:";
        for (const auto& v : violations) os << "\n  " << v.coefficient << ": " << v.message;
        throw ConfigError(os.str());
    }
    cfg.hash = config_hash(text, cfg.seed);
    return cfg;
}

ScenarioConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path, seed_override);
}

}  // namespace pohedge
