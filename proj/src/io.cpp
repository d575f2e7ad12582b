#include "pohedge/io.hpp"

#include <charconv>
#include <sstream>

#include "pohedge/errors.hpp"

namespace pohedge {

std::string format_number(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

CsvWriter::CsvWriter(const std::string& path, const std::string& hash,
                     const std::vector<std::string>& header, const std::string& extra_comment)
    : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw ConfigError("cannot write " + path);
    out_ << "# config_hash=" << hash;
    if (!extra_comment.empty()) out_ << " " << extra_comment;
    out_ << "\n";
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << "\n";
}

void CsvWriter::sep() {
    if (!fresh_) out_ << ',';
    fresh_ = false;
}

CsvWriter& CsvWriter::operator<<(double v) {
    sep();
    out_ << format_number(v);
    return *this;
}

CsvWriter& CsvWriter::operator<<(long long v) {
    sep();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& v) {
    sep();
    out_ << v;
    return *this;
}

void CsvWriter::end_row() {
    out_ << '\n';
    fresh_ = true;
}

void write_paths_csv(const std::string& file, const std::string& hash, const std::vector<PathSample>& paths) {
    std::string m = paths.empty() ? "P" : (paths[0].measure == Measure::P ? "P" : "Pstar");
    CsvWriter w(file, hash, {"path_id", "step", "t", "x", "s", "dW0", "dW1", "jump_mark"}, "measure=" + m);
    for (const auto& p : paths) {
        for (int n = 0; n <= p.n_steps(); ++n) {
            // increments of step n sit on node n; the terminal row has none
            bool last = n == p.n_steps();
            w << p.path_index << n << p.time(n) << p.x[n] << p.s[n] << (last ? 0.0 : p.dW0[n])
              << (last ? 0.0 : p.dW1[n]) << (last ? -1 : p.jump_mark[n]);
            w.end_row();
        }
    }
}

std::vector<PathSample> read_paths_csv(const std::string& file, const ModelSpec& spec, const TimeGrid& grid,
                                       std::uint64_t seed) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read " + file);
    std::string line;
    Measure measure = Measure::P;
    if (!std::getline(in, line) || line.rfind("# config_hash=", 0) != 0)
        throw ConfigError(file + ": missing config hash line");
    if (line.find("measure=Pstar") != std::string::npos) measure = Measure::Pstar;
    std::getline(in, line);  // header
    std::vector<PathSample> out;
    const int N = grid.n_steps;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> f;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 8) throw ConfigError(file + ": malformed row '" + line + "'");
        auto id = std::stoull(f[0]);
        int n = std::stoi(f[1]);
        if (n < 0 || n > N) throw ConfigError(file + ": step outside the configured grid");
        if (out.empty() || out.back().path_index != id) {
            PathSample p;
            p.grid = grid;
            p.measure = measure;
            p.seed = seed;
            p.stream = static_cast<std::uint64_t>(measure == Measure::P ? StreamId::PathP : StreamId::PathPstar);
            p.path_index = id;
            p.x.assign(N + 1, 0.0);
            p.s.assign(N + 1, 0.0);
            p.dW0.assign(N, 0.0);
            p.dW1.assign(N, 0.0);
            p.jump_mark.assign(N, -1);
            out.push_back(std::move(p));
        }
        auto& p = out.back();
        if (n == 0) p.t0 = std::stod(f[2]);
        p.x[n] = std::stod(f[3]);
        p.s[n] = std::stod(f[4]);
        if (n < N) {
            p.dW0[n] = std::stod(f[5]);
            p.dW1[n] = std::stod(f[6]);
            p.jump_mark[n] = std::stoi(f[7]);
        }
    }
    for (auto& p : out) rebuild_observations(spec, p);
    return out;
}

void write_filters_csv(const std::string& file, const std::string& hash,
                       const std::vector<std::vector<FilterState>>& filters_P,
                       const std::vector<std::vector<FilterState>>& filters_star) {
    CsvWriter w(file, hash, {"path_id", "step", "t", "measure", "index", "weight", "x"});
    auto emit = [&](std::size_t p, const std::vector<FilterState>& run) {
        for (std::size_t n = 0; n < run.size(); ++n) {
            const auto& f = run[n];
            for (std::size_t i = 0; i < f.size(); ++i) {
                w << p << n << f.t << (f.measure == Measure::P ? "P" : "Pstar") << i << f.w[i] << f.x[i];
                w.end_row();
            }
        }
    };
    for (std::size_t p = 0; p < filters_P.size(); ++p) {
        emit(p, filters_P[p]);
        if (p < filters_star.size()) emit(p, filters_star[p]);
    }
}

void write_surface_csv(const std::string& file, const std::string& hash, const ValueSurface& surface) {
    CsvWriter w(file, hash, {"state", "t", "s", "g", "dg_ds"});
    for (std::size_t n = 0; n < surface.n_nodes(); ++n) {
        const int ni = static_cast<int>(n);
        const double t = surface.t0 + surface.grid.t(ni);
        for (std::size_t k = 0; k < surface.n_sheets(); ++k) {
            for (std::size_t m = 0; m < surface.n_s(); ++m) {
                w << k << t << surface.s[m] << surface.at(n, k, m)
                  << surface.ds(ni, surface.x[k], surface.s[m]);
                w.end_row();
            }
        }
    }
}

void write_strategies_csv(const std::string& file, const std::string& hash,
                          const std::vector<StrategyPath>& strategies) {
    CsvWriter w(file, hash,
                {"path_id", "step", "t", "s", "beta_F", "beta_tilde_H", "phi_H", "beta_H", "V", "C"});
    for (std::size_t p = 0; p < strategies.size(); ++p) {
        const auto& sp = strategies[p];
        const std::size_t N = sp.beta_H.size();
        for (std::size_t n = 0; n <= N; ++n) {
            // the terminal node holds no position
            bool last = n == N;
            w << p << n << sp.t[n] << sp.s[n] << (last ? 0.0 : sp.beta_F[n])
              << (last ? 0.0 : sp.beta_tilde_H[n]) << (last ? 0.0 : sp.phi_H[n])
              << (last ? 0.0 : sp.beta_H[n]) << sp.V[n] << sp.C[n];
            w.end_row();
        }
    }
}

void write_structure_csv(const std::string& file, const std::string& hash,
                         const std::vector<StructureCoefficients>& coeffs,
                         const std::vector<MeasurePath>& densities) {
    CsvWriter w(file, hash, {"path_id", "step", "alpha_F", "alpha_H", "a", "p_a", "L"});
    for (std::size_t p = 0; p < coeffs.size(); ++p) {
        const auto& c = coeffs[p];
        for (std::size_t n = 0; n < c.alpha_F.size(); ++n) {
            // L at the left node of the step
            double L = p < densities.size() && n < densities[p].L.size() ? densities[p].L[n] : 1.0;
            w << p << n << c.alpha_F[n] << c.alpha_H[n] << c.a[n] << c.p_a[n] << L;
            w.end_row();
        }
    }
}

void write_json(const std::string& file, const nlohmann::ordered_json& j) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + file);
    out << j.dump(2) << "\n";
}

}  // namespace pohedge
