// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hybrid {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

/// Every key a config file may set, with its default.
const std::vector<ConfigKey>& config_registry();

/// Flat `dotted.key = value` settings layered over the registry defaults.
///
/// Lines are trimmed; `#` starts a comment; blank lines are ignored.
/// Setting a key that is not registered is an error that lists the valid
/// keys. Later assignments override earlier ones.
class Config {
public:
    Config();

    static Config parse(const std::string& text, const std::string& origin = "<string>");
    static Config load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;

    double get_double(const std::string& key) const;
    int64_t get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;
    std::vector<int64_t> get_ints(const std::string& key) const;

    /// Canonical `key = value` lines for every key in registry order.
    std::string canonical() const;
    /// FNV-1a over canonical(), as 16 hex digits.
    std::string hash() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace hybrid
