#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace warpcode {

/// Flat key=value settings. '#' starts a comment; blank lines are ignored.
/// Values are kept as text and converted on access, so every lookup names
/// its expected type in the error message.
class Params {
public:
    Params() = default;

    static Params parse(const std::string& text, const std::string& source = "<string>");
    static Params load(const std::filesystem::path& path);

    // "key=value"; later calls win.
    void set(const std::string& assignment);
    void set(const std::string& key, const std::string& value);
    void merge(const Params& overrides);

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback);
    int get_int(const std::string& key, int fallback);
    double get_double(const std::string& key, double fallback);
    bool get_bool(const std::string& key, bool fallback);
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback);

    // Throws ConfigError naming every key that no get_* call has read.
    void reject_unused() const;

    // Resolved settings (explicit values plus the defaults that were read), sorted by key.
    const std::map<std::string, std::string>& resolved() const { return resolved_; }
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    const std::string* find(const std::string& key);

    std::map<std::string, std::string> values_;
    std::map<std::string, std::string> resolved_;
    std::set<std::string> used_;
};

}  // namespace warpcode
