#include "bcfmc/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "bcfmc/error.hpp"

namespace bcfmc {

AcquisitionConfig RunConfig::acquisition() const {
    return AcquisitionConfig{n_c, d_c, f_c, alpha, f_s, c0, noise_std, envelope_eps};
}

RoiGrid RunConfig::roi() const {
    RoiGrid r;
    r.n_x = n_x;
    r.n_z = n_z;
    r.d_x = d_x.value_or(d_c);
    r.d_z = d_z.value_or(d_c);
    r.d_s = d_s.value_or(n_z * r.d_z);
    return r;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_per_epoch = batch_per_epoch;
    t.lr = lr;
    t.seed = seed;
    t.k_min = k_min;
    t.k_max = k_max;
    t.a_min = a_min;
    t.a_max = a_max;
    t.noise_std = train_noise_std;
    t.threads = threads;
    return t;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end)
        throw ConfigError("invalid value for '" + key + "': '" + text + "'");
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("invalid boolean for '" + key + "': '" + text + "'");
}

struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::optional<std::string>(const RunConfig&)> get;
};

template <class T>
Field number(T RunConfig::*member) {
    return {[member](RunConfig& c, const std::string& k, const std::string& v) {
                c.*member = parse_number<T>(k, v);
            },
            [member](const RunConfig& c) -> std::optional<std::string> {
                if constexpr (std::is_floating_point_v<T>)
                    return fmt_double(c.*member);
                else
                    return std::to_string(c.*member);
            }};
}

Field optional_double(std::optional<double> RunConfig::*member) {
    return {[member](RunConfig& c, const std::string& k, const std::string& v) {
                c.*member = parse_number<double>(k, v);
            },
            [member](const RunConfig& c) -> std::optional<std::string> {
                if (!(c.*member)) return std::nullopt;
                return fmt_double(*(c.*member));
            }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        t["n_c"] = number(&RunConfig::n_c);
        t["d_c"] = number(&RunConfig::d_c);
        t["f_c"] = number(&RunConfig::f_c);
        t["alpha"] = number(&RunConfig::alpha);
        t["f_s"] = number(&RunConfig::f_s);
        t["c0"] = number(&RunConfig::c0);
        t["noise_std"] = number(&RunConfig::noise_std);
        t["envelope_eps"] = number(&RunConfig::envelope_eps);
        t["n_x"] = number(&RunConfig::n_x);
        t["n_z"] = number(&RunConfig::n_z);
        t["d_x"] = optional_double(&RunConfig::d_x);
        t["d_z"] = optional_double(&RunConfig::d_z);
        t["d_s"] = optional_double(&RunConfig::d_s);
        t["lambda"] = optional_double(&RunConfig::lambda);
        t["lambda_frac"] = number(&RunConfig::lambda_frac);
        t["iters"] = number(&RunConfig::iters);
        t["lipschitz"] = optional_double(&RunConfig::lipschitz);
        t["lipschitz_iters"] = number(&RunConfig::lipschitz_iters);
        t["lipschitz_tol"] = number(&RunConfig::lipschitz_tol);
        t["layers"] = number(&RunConfig::layers);
        t["epochs"] = number(&RunConfig::epochs);
        t["batch_per_epoch"] = number(&RunConfig::batch_per_epoch);
        t["lr"] = number(&RunConfig::lr);
        t["k_min"] = number(&RunConfig::k_min);
        t["k_max"] = number(&RunConfig::k_max);
        t["a_min"] = number(&RunConfig::a_min);
        t["a_max"] = number(&RunConfig::a_max);
        t["train_noise_std"] = number(&RunConfig::train_noise_std);
        t["bench_reps"] = number(&RunConfig::bench_reps);
        t["seed"] = number(&RunConfig::seed);
        t["threads"] = number(&RunConfig::threads);
        t["memory_budget"] = number(&RunConfig::memory_budget);
        t["scatterers_file"] = {
            [](RunConfig& c, const std::string&, const std::string& v) { c.scatterers_file = v; },
            [](const RunConfig& c) -> std::optional<std::string> {
                if (c.scatterers_file.empty()) return std::nullopt;
                return c.scatterers_file;
            }};
        t["write_volume"] = {
            [](RunConfig& c, const std::string& k, const std::string& v) {
                c.write_volume = parse_bool(k, v);
            },
            [](const RunConfig& c) -> std::optional<std::string> {
                return c.write_volume ? "true" : "false";
            }};
        t["precision"] = {
            [](RunConfig& c, const std::string& k, const std::string& v) {
                if (v == "f64")
                    c.precision = Precision::f64;
                else if (v == "f32")
                    c.precision = Precision::f32;
                else
                    throw ConfigError("invalid value for '" + k + "': '" + v + "' (f32|f64)");
            },
            [](const RunConfig& c) -> std::optional<std::string> {
                return c.precision == Precision::f64 ? "f64" : "f32";
            }};
        t["bench_sizes"] = {
            [](RunConfig& c, const std::string& k, const std::string& v) {
                c.bench_sizes.clear();
                std::stringstream ss(v);
                std::string item;
                while (std::getline(ss, item, ',')) c.bench_sizes.push_back(parse_number<int>(k, trim(item)));
                if (c.bench_sizes.empty()) throw ConfigError("'" + k + "' must list at least one size");
            },
            [](const RunConfig& c) -> std::optional<std::string> {
                std::string out;
                for (std::size_t i = 0; i < c.bench_sizes.size(); ++i)
                    out += (i ? "," : "") + std::to_string(c.bench_sizes[i]);
                return out;
            }};
        return t;
    }();
    return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, _] : fields()) k.push_back(name);
        return k;
    }();
    return keys;
}

RunConfig parse_config(const std::string& text, std::vector<std::string>* present) {
    RunConfig c;
    std::vector<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = fields().find(key);
        if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            throw ConfigError("duplicate config key '" + key + "'");
        it->second.set(c, key, value);
        seen.push_back(key);
    }
    if (present) *present = std::move(seen);
    return c;
}

RunConfig load_config(const std::string& path, std::vector<std::string>* present) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), present);
}

std::string print_config(const RunConfig& c) {
    std::string out;
    for (const auto& [key, field] : fields()) {
        if (const auto v = field.get(c)) out += key + " = " + *v + "\n";
    }
    return out;
}

std::uint64_t config_hash(const RunConfig& c) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : print_config(c)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace bcfmc
