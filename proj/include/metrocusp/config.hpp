#pragma once

#include <map>
#include <string>
#include <vector>

#include "metrocusp/geometry.hpp"
#include "metrocusp/measure.hpp"

namespace metrocusp {

// Batch experiment description. Single text file, flat key-value pairs with
// nested blocks for the domain and density; no environment overrides except
// OUTPUT_DIR.
struct ExperimentConfig {
    std::string kind;  // gap-sweep | spectrum | tv | localization | gn-table | glue | decompose | sample
    std::string domain_text;
    std::string density_text;
    std::vector<double> h_values;
    int grid_ratio = 10;
    uint64_t seed = 1;
    std::string output_dir = "out";
    int workers = 0;  // 0 = hardware concurrency
    std::map<std::string, double> tolerances;

    DomainSpec domain() const { return DomainSpec::parse(domain_text); }
    DensitySpec density() const { return DensitySpec::parse(density_text); }
    double tol(const std::string& key, double fallback) const {
        auto it = tolerances.find(key);
        return it == tolerances.end() ? fallback : it->second;
    }

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig parse_file(const std::string& path);
    std::string serialize() const;  // canonical form; parse(serialize()) round-trips
    void validate() const;          // throws std::invalid_argument with field paths
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace metrocusp
