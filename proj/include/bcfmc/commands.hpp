#pragma once

#include <cstdint>
#include <exception>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bcfmc/bclista.hpp"
#include "bcfmc/config.hpp"
#include "bcfmc/conv_model.hpp"
#include "bcfmc/tensor_file.hpp"

namespace bcfmc {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitIo = 2, kExitNumerical = 3 };

int exit_code_for(const std::exception& e);

// Keys that must appear explicitly in the config file for a subcommand.
const std::vector<std::string>& required_keys(const std::string& command);
void check_required(const std::string& command, const std::vector<std::string>& present);

// --- serialization helpers -------------------------------------------------

void add_provenance(TensorFile& file, const RunConfig& cfg);
void add_geometry(TensorFile& file, const ConvGeometry& g);
ConvGeometry read_geometry(const TensorFile& file);

void add_slices(TensorFile& file, const SliceSet& s, DType dtype = DType::f64);
void add_volume(TensorFile& file, const FmcVolume& v, DType dtype = DType::f64);
// Reads "slices/<i_s>" records, or folds a "volume" record when no slices exist.
SliceSet read_measurements(const TensorFile& file);

TensorFile net_to_tensors(const NetParams& net);
NetParams net_from_tensors(const TensorFile& file);

ScattererList read_scatterers_csv(const std::string& path);
void write_scatterers_csv(const std::string& path, const ScattererList& list);

// |x| scaled by max-abs into 0..255, row-major N_z rows x N_x columns.
std::vector<std::uint8_t> render_gray(const Eigen::MatrixXd& map);
void write_pgm(const std::string& path, const Eigen::MatrixXd& map, const std::string& comment = {});

struct BenchRow {
    int n_c = 0;
    int n_x = 0;
    int n_z = 0;
    int n_t = 0;
    std::uint64_t dense_bytes = 0;
    std::uint64_t conv_bytes = 0;
    bool timed = false;
    double fista_max = 0, fista_avg = 0, fista_min = 0;
    double lista_max = 0, lista_avg = 0, lista_min = 0;

    double ratio() const { return static_cast<double>(dense_bytes) / static_cast<double>(conv_bytes); }
};

std::vector<BenchRow> run_bench(const RunConfig& cfg);

// --- subcommands -------------------------------------------------------------

void cmd_simulate(const RunConfig& cfg, const std::string& out);
void cmd_build_kernels(const RunConfig& cfg, const std::string& out);
void cmd_fista(const RunConfig& cfg, const std::string& data_in, const std::string& out);
void cmd_lista_train(const RunConfig& cfg, const std::string& out);
void cmd_lista_infer(const RunConfig& cfg, const std::string& net_in, const std::string& data_in,
                     const std::string& out);
void cmd_bench(const RunConfig& cfg, const std::string& out_csv);
void cmd_render(const std::string& tensor_in, const std::string& image_out);

}  // namespace bcfmc
