// Runs the eight acceptance criteria against the bundled scenarios and
// prints one PASS/FAIL line per criterion. Exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pohedge/config.hpp"
#include "pohedge/errors.hpp"
#include "pohedge/scenario.hpp"

using namespace pohedge;

namespace {

std::string scenario(const std::string& name) { return std::string(POHEDGE_SCENARIO_DIR) + "/" + name + ".toml"; }

ScenarioConfig load(const std::string& name, int n_paths = 0) {
    auto cfg = load_config(scenario(name));
    if (n_paths > 0) cfg.n_paths = n_paths;
    return cfg;
}

struct Outcome {
    bool pass = true;
    std::vector<std::string> lines;

    void add(const std::string& where, const CheckResult& c) {
        pass = pass && c.pass;
        for (const auto& it : c.items) {
            std::ostringstream os;
            os << (it.pass ? "ok  " : "BAD ") << where << " " << c.name << ": " << it.label << " = " << it.value;
            if (it.se > 0.0) os << " (se " << it.se << ")";
            os << ", bound " << it.bound;
            lines.push_back(os.str());
        }
        if (!c.note.empty()) lines.push_back("    " + where + " " + c.name + ": " + c.note);
    }
    void require(bool ok, const std::string& what) {
        pass = pass && ok;
        lines.push_back(std::string(ok ? "ok  " : "BAD ") + what);
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string runtime_line(double sec, double limit) {
    std::ostringstream os;
    os << "runtime " << sec << " s, limit " << limit << " s";
    return os.str();
}

const CheckResult& find(const VerifyResult& v, const std::string& name) {
    for (const auto& c : v.checks)
        if (c.name == name) return c;
    throw std::runtime_error("check missing: " + name);
}

Outcome ac1() {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    auto cfg = load("bs_complete", 10000);
    auto v = verify(cfg, {"bs_value", "bs_delta", "variance_ratio"});
    for (const auto& c : v.checks) o.add("bs_complete", c);
    o.require(seconds_since(t0) < 60.0, runtime_line(seconds_since(t0), 60.0));
    return o;
}

Outcome ac2() {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    auto cfg = load("twostate_filter");
    o.add("twostate_filter", run_check("filter_oracle", cfg));
    o.require(seconds_since(t0) < 1.0, runtime_line(seconds_since(t0), 1.0));
    return o;
}

// One 10^4-path pipeline per model serves criteria 3, 4 and 5.
struct Shared {
    VerifyResult hidden, jump, jd;
    double seconds_martingale = 0.0;
};

Shared run_shared() {
    Shared s;
    s.hidden = verify(load("hidden_drift", 10000), {"martingale", "projection"});
    s.jump = verify(load("twostate_jump", 10000), {"martingale", "cost_regression", "orthogonality"});
    s.jd = verify(load("twostate_filter", 10000), {"martingale", "cost_regression", "orthogonality"});
    for (const auto* v : {&s.hidden, &s.jump, &s.jd}) s.seconds_martingale += find(*v, "martingale").seconds;
    return s;
}

Outcome ac3(const Shared& s) {
    Outcome o;
    o.add("hidden_drift", find(s.hidden, "martingale"));
    o.add("twostate_jump", find(s.jump, "martingale"));
    o.add("twostate_filter", find(s.jd, "martingale"));
    o.require(s.seconds_martingale < 300.0, runtime_line(s.seconds_martingale, 300.0));
    return o;
}

Outcome ac4(const Shared& s) {
    Outcome o;
    o.add("hidden_drift", find(s.hidden, "projection"));
    return o;
}

Outcome ac5(const Shared& s) {
    Outcome o;
    o.add("twostate_jump", find(s.jump, "cost_regression"));
    o.add("twostate_jump", find(s.jump, "orthogonality"));
    o.add("twostate_filter", find(s.jd, "cost_regression"));
    o.add("twostate_filter", find(s.jd, "orthogonality"));
    return o;
}

Outcome ac6() {
    Outcome o;
    o.add("twostate_jump", run_check("brute_force", load("twostate_jump")));
    return o;
}

Outcome ac7() {
    Outcome o;
    o.add("twostate_filter", run_check("particle_tv", load("twostate_filter")));
    return o;
}

Outcome ac8() {
    Outcome o;
    for (const char* s : {"bs_complete", "twostate_jump", "twostate_filter", "hidden_drift", "ou_drift"})
        o.add(s, run_check("determinism", load(s)));
    return o;
}

Outcome guarded(const std::function<Outcome()>& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        Outcome o;
        o.require(false, std::string("error: ") + e.what());
        return o;
    }
}

}  // namespace

int main() {
    std::cout.precision(6);
    struct Row {
        const char* id;
        const char* title;
        Outcome out;
    };
    std::vector<Row> rows;
    rows.push_back({"AC1", "Black-Scholes limit (value, delta, variance ratio)", guarded(ac1)});
    rows.push_back({"AC2", "exact filter vs Bayes enumeration, P and P*", guarded(ac2)});
    Shared shared;
    std::string shared_error;
    try {
        shared = run_shared();
    } catch (const std::exception& e) {
        shared_error = e.what();
    }
    auto with_shared = [&](Outcome (*fn)(const Shared&)) {
        if (!shared_error.empty()) {
            Outcome o;
            o.require(false, "error: " + shared_error);
            return o;
        }
        return guarded([&] { return fn(shared); });
    };
    rows.push_back({"AC3", "martingale batteries on the three model families", with_shared(ac3)});
    rows.push_back({"AC4", "projection identity, hidden-drift diffusion", with_shared(ac4)});
    rows.push_back({"AC5", "cost regression and orthogonality, jump models", with_shared(ac5)});
    rows.push_back({"AC6", "one-step brute-force optimality", guarded(ac6)});
    rows.push_back({"AC7", "particle filter convergence", guarded(ac7)});
    rows.push_back({"AC8", "determinism under 1, 2 and 8 workers", guarded(ac8)});

    bool all = true;
    for (const auto& r : rows) {
        for (const auto& l : r.out.lines) std::cout << "      " << l << "\n";
        all = all && r.out.pass;
    }
    std::cout << "\n";
    for (const auto& r : rows) std::cout << r.id << " " << (r.out.pass ? "PASS" : "FAIL") << "  " << r.title << "\n";
    return all ? 0 : 1;
}
