#include "metrocusp/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace metrocusp {

namespace {
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// grab a balanced `{ ... }` block starting after `key`
std::string take_block(std::istringstream& is, const std::string& key) {
    std::string tok;
    if (!(is >> tok) || tok != "{")
        throw ConfigError(key + ": expected '{'");
    std::string out = key + " {";
    int depth = 1;
    while (depth > 0 && (is >> tok)) {
        if (tok == "{") ++depth;
        if (tok == "}") --depth;
        out += " " + tok;
    }
    if (depth != 0) throw ConfigError(key + ": unterminated block");
    out += "\n";
    return out;
}
}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    // strip comments
    std::string clean;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        auto p = line.find('#');
        if (p != std::string::npos) line.erase(p);
        clean += line + "\n";
    }
    std::istringstream is(clean);
    ExperimentConfig c;
    std::string tok;
    while (is >> tok) {
        if (tok == "experiment")
            is >> c.kind;
        else if (tok == "seed")
            is >> c.seed;
        else if (tok == "grid_ratio")
            is >> c.grid_ratio;
        else if (tok == "workers")
            is >> c.workers;
        else if (tok == "output_dir")
            is >> c.output_dir;
        else if (tok == "h_values") {
            c.h_values.clear();
            while (is >> std::ws, is.peek() != EOF) {
                char ch = static_cast<char>(is.peek());
                if (!(std::isdigit(ch) || ch == '.' || ch == '-')) break;
                double v;
                is >> v;
                c.h_values.push_back(v);
            }
        } else if (tok == "domain")
            c.domain_text = take_block(is, "domain");
        else if (tok == "density")
            c.density_text = take_block(is, "density");
        else if (tok == "tolerances") {
            std::string t;
            if (!(is >> t) || t != "{") throw ConfigError("tolerances: expected '{'");
            while (is >> t && t != "}") {
                double v;
                if (!(is >> v)) throw ConfigError("tolerances." + t + ": expected value");
                c.tolerances[t] = v;
            }
        } else
            throw ConfigError("unknown config key '" + tok + "'");
    }
    if (const char* env = std::getenv("OUTPUT_DIR")) c.output_dir = env;
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void ExperimentConfig::validate() const {
    static const std::vector<std::string> kinds = {"gap-sweep", "spectrum",  "tv",
                                                   "localization", "gn-table", "glue",
                                                   "decompose", "sample"};
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
        throw ConfigError("experiment: unknown kind '" + kind + "'");
    if (kind != "gn-table" && kind != "glue") {
        if (domain_text.empty()) throw ConfigError("domain: missing block");
        domain();  // construction enforces the sharpness window 0 < gamma < 2
    }
    if (h_values.empty() && kind != "gn-table") throw ConfigError("h_values: missing");
    for (size_t i = 0; i < h_values.size(); ++i) {
        if (!(h_values[i] > 0.0 && h_values[i] < 1.0))
            throw ConfigError("h_values[" + std::to_string(i) + "]: must lie in (0,1)");
        if (i > 0 && !(h_values[i] < h_values[i - 1]))
            throw ConfigError("h_values: must be strictly decreasing");
    }
    if (grid_ratio < 5) throw ConfigError("grid_ratio: must be >= 5");
    if (!density_text.empty()) density();
}

std::string ExperimentConfig::serialize() const {
    std::ostringstream os;
    os << "experiment " << kind << "\n";
    os << "seed " << seed << "\n";
    os << "grid_ratio " << grid_ratio << "\n";
    os << "workers " << workers << "\n";
    os << "output_dir " << output_dir << "\n";
    if (!h_values.empty()) {
        os << "h_values";
        for (double h : h_values) os << " " << fmt(h);
        os << "\n";
    }
    if (!domain_text.empty()) os << domain_text;
    if (!density_text.empty()) os << density_text;
    if (!tolerances.empty()) {
        os << "tolerances {";
        for (const auto& [k, v] : tolerances) os << " " << k << " " << fmt(v);
        os << " }\n";
    }
    return os.str();
}

}  // namespace metrocusp
