#pragma once

// Plain key=value run configuration ('#' comments, blank lines ignored).
// Each consumer pulls its keys; leftover keys are an error so typos never
// silently fall back to defaults.

#include <map>
#include <set>
#include <string>

#include "scaa/phantom.hpp"
#include "scaa/trainer.hpp"

namespace scaa {

class KvConfig {
public:
    KvConfig() = default;
    static KvConfig from_file(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get_str(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated list; must hold exactly n entries.
    std::vector<int64_t> get_ints(const std::string& key, size_t n,
                                  const std::vector<int64_t>& fallback) const;
    std::vector<double> get_doubles(const std::string& key, size_t n,
                                    const std::vector<double>& fallback) const;

    // Throws listing every key no consumer touched.
    void check_all_used() const;

private:
    std::string path_ = "<none>";
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

// `preset` key (paper|desk|micro) is applied before individual overrides.
void apply_model_keys(const KvConfig& kv, ScaaConfig& cfg);
void apply_train_keys(const KvConfig& kv, TrainConfig& cfg);
void apply_phantom_keys(const KvConfig& kv, PhantomSpec& spec);

}  // namespace scaa
