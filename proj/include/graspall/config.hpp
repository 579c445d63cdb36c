#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

namespace graspall {

/// Flat key=value configuration. '#' starts a comment; blank lines are
/// ignored. Unknown keys and out-of-range values are rejected up front so a
/// typo cannot silently fall back to a default.
class Config {
public:
    static const std::map<std::string, std::string>& defaults() {
        static const std::map<std::string, std::string> d = {
            {"plc.curves", "12"},
            {"plc.points", "256"},
            {"plc.tau", "0.1"},
            {"plc.lr", "0.01"},
            {"memory.alpha", "0.05"},
            {"fusion.patch", "8"},
            {"fusion.channels", "16"},
            {"fusion.classes", "9"},
            {"train.lr", "0.05"},
            {"train.align_epochs", "10"},
            {"train.structure_epochs", "8"},
            {"train.mask_epochs", "20"},
            {"canny.sigma", "1.4"},
            {"canny.low", "0.1"},
            {"canny.high", "0.3"},
            {"bilateral.window", "5"},
            {"bilateral.sigma_s", "2.0"},
            {"bilateral.sigma_i", "0.1"},
            {"grasp.k_percent", "1.0"},
            {"fda.beta", "0.01"},
            {"synth.width", "96"},
            {"synth.height", "96"},
            {"synth.scenes", "20"},
            {"synth.levels", "1.0,0.9,0.8,0.6"},
        };
        return d;
    }

    Config() : values_(defaults()) {}

    static Config from_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw DataError("cannot open config: " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return from_string(ss.str(), path);
    }

    static Config from_string(const std::string& text, const std::string& origin = "<config>") {
        Config cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw DataError(origin + ":" + std::to_string(lineno) + ": expected key=value");
            std::string key = trim(line.substr(0, eq));
            std::string val = trim(line.substr(eq + 1));
            if (!defaults().count(key))
                throw DataError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
            cfg.values_[key] = val;
        }
        cfg.validate();
        return cfg;
    }

    void set(const std::string& key, const std::string& value) {
        if (!defaults().count(key)) throw DataError("unknown config key '" + key + "'");
        values_[key] = value;
        validate();
    }

    int geti(const std::string& key) const {
        try {
            return std::stoi(get(key));
        } catch (const std::exception&) {
            throw DataError("config key '" + key + "' is not an integer: " + get(key));
        }
    }

    double getd(const std::string& key) const {
        try {
            return std::stod(get(key));
        } catch (const std::exception&) {
            throw DataError("config key '" + key + "' is not a number: " + get(key));
        }
    }

    std::vector<double> get_list(const std::string& key) const {
        std::vector<double> out;
        std::istringstream in(get(key));
        std::string item;
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw DataError("config key '" + key + "' has a non-numeric entry: " + item);
            }
        }
        if (out.empty()) throw DataError("config key '" + key + "' is an empty list");
        return out;
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw DataError("unknown config key '" + key + "'");
        return it->second;
    }

    /// Range checks mirroring the module preconditions.
    void validate() const {
        auto bad = [](const std::string& key, const std::string& why) {
            throw DataError("config key '" + key + "' " + why);
        };
        if (geti("plc.curves") < 1) bad("plc.curves", "must be >= 1");
        if (geti("plc.points") < 2) bad("plc.points", "must be >= 2");
        if (!(getd("plc.tau") > 0)) bad("plc.tau", "must be > 0");
        if (!(getd("plc.lr") > 0)) bad("plc.lr", "must be > 0");
        double alpha = getd("memory.alpha");
        if (!(alpha > 0 && alpha < 1)) bad("memory.alpha", "must be in (0, 1)");
        if (geti("fusion.patch") < 1) bad("fusion.patch", "must be >= 1");
        if (geti("fusion.channels") < 1) bad("fusion.channels", "must be >= 1");
        if (geti("fusion.classes") < 2) bad("fusion.classes", "must be >= 2");
        if (!(getd("train.lr") >= 0)) bad("train.lr", "must be >= 0");
        if (geti("train.align_epochs") < 0) bad("train.align_epochs", "must be >= 0");
        if (geti("train.structure_epochs") < 0) bad("train.structure_epochs", "must be >= 0");
        if (geti("train.mask_epochs") < 0) bad("train.mask_epochs", "must be >= 0");
        if (!(getd("canny.sigma") > 0)) bad("canny.sigma", "must be > 0");
        double lo = getd("canny.low"), hi = getd("canny.high");
        if (!(0 <= lo && lo < hi && hi <= 1)) bad("canny.low/high", "need 0 <= low < high <= 1");
        int win = geti("bilateral.window");
        if (win < 3 || win % 2 == 0) bad("bilateral.window", "must be odd and >= 3");
        if (!(getd("bilateral.sigma_s") > 0)) bad("bilateral.sigma_s", "must be > 0");
        if (!(getd("bilateral.sigma_i") > 0)) bad("bilateral.sigma_i", "must be > 0");
        if (!(getd("grasp.k_percent") > 0)) bad("grasp.k_percent", "must be > 0");
        double beta = getd("fda.beta");
        if (!(beta >= 0 && beta <= 0.5)) bad("fda.beta", "must be in [0, 0.5]");
        if (geti("synth.width") < 8) bad("synth.width", "must be >= 8");
        if (geti("synth.height") < 8) bad("synth.height", "must be >= 8");
        if (geti("synth.scenes") < 1) bad("synth.scenes", "must be >= 1");
        for (double l : get_list("synth.levels"))
            if (!(l >= 0 && l <= 1)) bad("synth.levels", "entries must be in [0, 1]");
    }

private:
    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t\r\n");
        auto e = s.find_last_not_of(" \t\r\n");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

} // namespace graspall
