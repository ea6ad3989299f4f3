#pragma once

// Flat key=value run configuration with dotted section names.
//
//   # comment
//   model.m = 4
//   [train]          <- optional section header, prefixes following keys
//   lr = 1e-3
//
// Keys are checked against a schema of defaults; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace srkn {

struct ModelConfig;
struct TrainConfig;

class Config {
public:
    // Every known key with its default value.
    static Config defaults();

    // Parses text into key/value pairs without schema checks.
    static Config parse(std::string_view text, const std::string& source = "<string>");
    static Config load(const std::filesystem::path& path);

    // Overlays `other` onto this config; keys absent from this config are
    // rejected.
    void merge(const Config& other);
    // Parses "key=value" and sets it; the key must already exist.
    void set_override(std::string_view assignment);
    void set(const std::string& key, std::string value);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    // Comma-separated non-negative integers; "" or "none" is the empty list.
    std::vector<std::size_t> get_sizes(const std::string& key) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    // Sorted key = value lines; parse(to_text()) reproduces the config.
    std::string to_text() const;
    void save(const std::filesystem::path& path) const;

private:
    friend void store_model_config(Config& c, const ModelConfig& mc);
    std::map<std::string, std::string> values_;
};

ModelConfig model_config_from(const Config& c);
TrainConfig train_config_from(const Config& c);
// Writes the model.* keys of `mc` into `c`.
void store_model_config(Config& c, const ModelConfig& mc);

}  // namespace srkn
