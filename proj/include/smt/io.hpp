#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace smt::io {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// RFC-4180 quoting: quote when the field contains comma, quote or newline.
inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : os_(path) {
        if (!os_) throw std::runtime_error("cannot open for writing: " + path);
    }

    void comment(const std::string& line) { os_ << "# " << line << "\n"; }

    void header(const std::vector<std::string>& cols) { row_strings(cols); }

    void row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os_ << ",";
            os_ << csv_escape(cells[i]);
        }
        os_ << "\n";
    }

    void row(const std::vector<double>& vals) {
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (i) os_ << ",";
            os_ << format_double(vals[i]);
        }
        os_ << "\n";
    }

    bool good() const { return static_cast<bool>(os_); }

private:
    std::ofstream os_;
};

inline std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---- flat config: `key = value` lines with [section] headers ----------------

struct Config {
    // keys are "section.key" (or bare "key" before any section header)
    std::map<std::string, std::string> values;

    bool has(const std::string& key) const { return values.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback = "") const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size())
            throw std::invalid_argument("config: bad number for " + key + ": " + it->second);
        return v;
    }

    long get_int(const std::string& key, long fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        std::size_t pos = 0;
        const long v = std::stol(it->second, &pos);
        if (pos != it->second.size())
            throw std::invalid_argument("config: bad integer for " + key + ": " + it->second);
        return v;
    }

    void set(const std::string& key, const std::string& value) { values[key] = value; }
};

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline Config parse_config(std::istream& is) {
    Config cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        cfg.values[section.empty() ? key : section + "." + key] = val;
    }
    return cfg;
}

inline Config parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    return parse_config(is);
}

inline std::string serialize_config(const Config& cfg) {
    // group by section, emit deterministically sorted
    std::map<std::string, std::map<std::string, std::string>> sections;
    for (const auto& [k, v] : cfg.values) {
        const auto dot = k.find('.');
        if (dot == std::string::npos) sections[""][k] = v;
        else sections[k.substr(0, dot)][k.substr(dot + 1)] = v;
    }
    std::ostringstream os;
    for (const auto& [sec, kv] : sections) {
        if (!sec.empty()) os << "[" << sec << "]\n";
        for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
    }
    return os.str();
}

// ---- range spec: "min:max:count" with optional ":log" ------------------------

struct RangeSpec {
    double lo = 0.0;
    double hi = 0.0;
    int count = 1;
    bool logspace = false;

    std::vector<double> values() const {
        std::vector<double> v;
        if (count == 1) {
            v.push_back(lo);
            return v;
        }
        for (int i = 0; i < count; ++i) {
            const double f = static_cast<double>(i) / (count - 1);
            v.push_back(logspace ? lo * std::pow(hi / lo, f) : lo + (hi - lo) * f);
        }
        return v;
    }
};

inline RangeSpec parse_range(const std::string& spec) {
    RangeSpec r;
    std::vector<std::string> parts;
    std::string cur;
    for (char c : spec) {
        if (c == ':') { parts.push_back(cur); cur.clear(); }
        else cur += c;
    }
    parts.push_back(cur);
    if (parts.size() == 1) {
        r.lo = r.hi = std::stod(parts[0]);
        r.count = 1;
        return r;
    }
    if (parts.size() < 3 || parts.size() > 4)
        throw std::invalid_argument("range spec must be value or min:max:count[:log]: " + spec);
    r.lo = std::stod(parts[0]);
    r.hi = std::stod(parts[1]);
    r.count = std::stoi(parts[2]);
    if (parts.size() == 4) {
        if (parts[3] == "log") r.logspace = true;
        else if (parts[3] == "lin") r.logspace = false;
        else throw std::invalid_argument("range spacing must be lin or log: " + spec);
    }
    if (r.count < 1 || !(r.lo > 0.0) || !(r.hi > 0.0))
        throw std::invalid_argument("range must be positive with count >= 1: " + spec);
    return r;
}

inline std::string range_to_string(const RangeSpec& r) {
    if (r.count == 1) return format_double(r.lo);
    return format_double(r.lo) + ":" + format_double(r.hi) + ":" + std::to_string(r.count) +
           (r.logspace ? ":log" : "");
}

} // namespace smt::io
