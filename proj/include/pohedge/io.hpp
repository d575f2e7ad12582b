#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pohedge/filtering.hpp"
#include "pohedge/hedging.hpp"
#include "pohedge/pricing.hpp"
#include "pohedge/simulate.hpp"
#include "pohedge/structure.hpp"

namespace pohedge {

// Shortest representation that round-trips.
std::string format_number(double v);

// CSV with a "# config_hash=<hex>" first line and a header row.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& hash, const std::vector<std::string>& header,
              const std::string& extra_comment = "");
    CsvWriter& operator<<(double v);
    CsvWriter& operator<<(long long v);
    CsvWriter& operator<<(int v) { return *this << static_cast<long long>(v); }
    CsvWriter& operator<<(std::size_t v) { return *this << static_cast<long long>(v); }
    CsvWriter& operator<<(const std::string& v);
    CsvWriter& operator<<(const char* v) { return *this << std::string(v); }
    void end_row();

private:
    void sep();
    std::ofstream out_;
    std::string path_;
    bool fresh_ = true;
};

void write_paths_csv(const std::string& file, const std::string& hash, const std::vector<PathSample>& paths);
// Reads a paths dump back; the grid and measure come from the caller.
std::vector<PathSample> read_paths_csv(const std::string& file, const ModelSpec& spec, const TimeGrid& grid,
                                       std::uint64_t seed);

void write_filters_csv(const std::string& file, const std::string& hash,
                       const std::vector<std::vector<FilterState>>& filters_P,
                       const std::vector<std::vector<FilterState>>& filters_star);
void write_surface_csv(const std::string& file, const std::string& hash, const ValueSurface& surface);
void write_strategies_csv(const std::string& file, const std::string& hash,
                          const std::vector<StrategyPath>& strategies);
void write_structure_csv(const std::string& file, const std::string& hash,
                         const std::vector<StructureCoefficients>& coeffs,
                         const std::vector<MeasurePath>& densities);

void write_json(const std::string& file, const nlohmann::ordered_json& j);

}  // namespace pohedge
