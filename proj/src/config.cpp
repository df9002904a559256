#include "warpcode/config.hpp"

#include "warpcode/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace warpcode {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* type) {
    throw ConfigError("setting '" + key + "' = '" + value + "' is not a valid " + type);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* type) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto res = std::from_chars(value.data(), end, out);
    if (res.ec != std::errc() || res.ptr != end) bad_value(key, value, type);
    return out;
}

}  // namespace

Params Params::parse(const std::string& text, const std::string& source) {
    Params p;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
            throw ConfigError(source + ":" + std::to_string(number) + ": expected key=value, got '" + line + "'");
        }
        p.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return p;
}

Params Params::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void Params::set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty()) {
        throw ConfigError("expected key=value, got '" + assignment + "'");
    }
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Params::set(const std::string& key, const std::string& value) { values_[key] = value; }

void Params::merge(const Params& overrides) {
    for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

const std::string* Params::find(const std::string& key) {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
}

std::string Params::get_string(const std::string& key, const std::string& fallback) {
    const auto* v = find(key);
    const std::string out = v ? *v : fallback;
    resolved_[key] = out;
    return out;
}

int Params::get_int(const std::string& key, int fallback) {
    const auto* v = find(key);
    const int out = v ? parse_number<int>(key, *v, "integer") : fallback;
    resolved_[key] = std::to_string(out);
    return out;
}

std::uint64_t Params::get_u64(const std::string& key, std::uint64_t fallback) {
    const auto* v = find(key);
    const std::uint64_t out = v ? parse_number<std::uint64_t>(key, *v, "unsigned integer") : fallback;
    resolved_[key] = std::to_string(out);
    return out;
}

double Params::get_double(const std::string& key, double fallback) {
    const auto* v = find(key);
    const double out = v ? parse_number<double>(key, *v, "number") : fallback;
    std::ostringstream ss;
    ss.precision(17);
    ss << out;
    resolved_[key] = ss.str();
    return out;
}

bool Params::get_bool(const std::string& key, bool fallback) {
    const auto* v = find(key);
    bool out = fallback;
    if (v) {
        if (*v == "true" || *v == "1" || *v == "yes") {
            out = true;
        } else if (*v == "false" || *v == "0" || *v == "no") {
            out = false;
        } else {
            bad_value(key, *v, "boolean");
        }
    }
    resolved_[key] = out ? "true" : "false";
    return out;
}

std::vector<int> Params::get_int_list(const std::string& key, const std::vector<int>& fallback) {
    const auto* v = find(key);
    std::vector<int> out = fallback;
    if (v) {
        out.clear();
        std::istringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item), "integer list"));
        if (out.empty()) bad_value(key, *v, "integer list");
    }
    std::string text;
    for (std::size_t i = 0; i < out.size(); ++i) text += (i ? "," : "") + std::to_string(out[i]);
    resolved_[key] = text;
    return out;
}

void Params::reject_unused() const {
    std::string unknown;
    for (const auto& [k, v] : values_) {
        if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    }
    if (!unknown.empty()) throw ConfigError("unknown setting(s): " + unknown);
}

}  // namespace warpcode
