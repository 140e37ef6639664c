#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bcfmc/bclista.hpp"
#include "bcfmc/scene.hpp"

namespace bcfmc {

enum class Precision { f64, f32 };

// Flat `key = value` run configuration; `#` starts a comment. ROI spacings
// left unset follow the array: d_x = d_z = d_c and d_s = n_z * d_z.
struct RunConfig {
    // acquisition
    int n_c = 4;
    double d_c = 0.5e-3;
    double f_c = 5.0e6;
    double alpha = 2.5e12;
    double f_s = 20.0e6;
    double c0 = 6300.0;
    double noise_std = 0.0;
    double envelope_eps = 1e-3;
    // roi
    int n_x = 4;
    int n_z = 4;
    std::optional<double> d_x;
    std::optional<double> d_z;
    std::optional<double> d_s;
    // solver
    std::optional<double> lambda;  // absolute; otherwise lambda_frac * ||A^T y||_inf
    double lambda_frac = 1e-2;
    int iters = 100;
    std::optional<double> lipschitz;
    int lipschitz_iters = 100;
    double lipschitz_tol = 1e-6;
    // bc-lista
    int layers = 5;
    int epochs = 50;
    int batch_per_epoch = 20;
    double lr = 1e-4;
    int k_min = 1;
    int k_max = 5;
    double a_min = 0.5;
    double a_max = 1.0;
    double train_noise_std = 0.0;
    // simulate
    std::string scatterers_file;
    bool write_volume = false;
    // bench
    std::vector<int> bench_sizes{2, 4, 8};
    int bench_reps = 100;
    // general
    Precision precision = Precision::f64;
    std::uint64_t seed = 0;
    int threads = 1;
    std::uint64_t memory_budget = 2ull << 30;

    AcquisitionConfig acquisition() const;
    RoiGrid roi() const;
    TrainConfig train_config() const;

    bool operator==(const RunConfig&) const = default;
};

// Parses config text. Unknown or duplicate keys and malformed values throw
// ConfigError. The keys that were set explicitly are reported in `present`.
RunConfig parse_config(const std::string& text, std::vector<std::string>* present = nullptr);
RunConfig load_config(const std::string& path, std::vector<std::string>* present = nullptr);

// Canonical text form; parse_config(print_config(c)) == c.
std::string print_config(const RunConfig& c);

// FNV-1a 64 of the canonical text form.
std::uint64_t config_hash(const RunConfig& c);

const std::vector<std::string>& config_keys();

}  // namespace bcfmc
