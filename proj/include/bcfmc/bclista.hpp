#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bcfmc/conv_model.hpp"
#include "bcfmc/scene.hpp"

namespace bcfmc {

// One unrolled iteration: x+ = S_theta(x + step * sum_s agg_w[s] G_s^T (y_s - B_s x)).
// theta corresponds to lambda/L and step to 1/L.
struct LayerParams {
    double theta = 0.0;
    double step = 1.0;
    std::vector<RowMatrix<double>> g_kernels;  // same shapes as the forward bank
    Eigen::VectorXd agg_w;                     // length N_c

    double lambda() const { return theta / step; }
};

struct TrainableMask {
    bool theta = true;
    bool step = true;
    bool g_kernels = true;
    bool agg_w = true;
    bool forward = false;
    bool operator==(const TrainableMask&) const = default;
};

struct NetParams {
    KernelBank forward_bank;
    std::vector<LayerParams> layers;
    TrainableMask trainable;

    int depth() const { return static_cast<int>(layers.size()); }
    void validate() const;
};

// K layers initialized from the physical model: g = forward kernels,
// theta = lambda0 / l0, step = 1 / l0, agg_w = slice multiplicities.
NetParams init_from_model(const KernelBank& bank, double lambda0, double l0, int k);

Eigen::VectorXd lista_layer(const Eigen::VectorXd& x, const SliceSet& y, const LayerParams& layer,
                            const KernelBank& forward_bank, int threads = 1);

// Intermediate values of one forward pass, kept for the backward sweep.
struct LayerRecord {
    Eigen::VectorXd x_in;
    SliceSet residual;                      // y - B x_in
    std::vector<Eigen::VectorXd> backproj;  // G_s^T r_s per slice, before agg_w
    Eigen::VectorXd update;                 // sum_s agg_w[s] backproj[s]
    Eigen::VectorXd pre;                    // x_in + step * update
};

struct ForwardTape {
    std::vector<LayerRecord> layers;
    Eigen::VectorXd output;
};

ForwardTape lista_forward_recorded(const NetParams& net, const SliceSet& y, int threads = 1);

// Runs all layers from x0 = 0.
Eigen::VectorXd lista_forward(const NetParams& net, const SliceSet& y, int threads = 1);

double loss_mse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);

struct LayerGrads {
    double theta = 0.0;
    double step = 0.0;
    std::vector<RowMatrix<double>> g_kernels;
    Eigen::VectorXd agg_w;
};

struct NetGrads {
    std::vector<LayerGrads> layers;
    std::vector<RowMatrix<double>> forward;  // empty unless the forward bank is trainable
    double loss = 0.0;

    // Zero-valued gradients shaped like net.
    static NetGrads zeros_like(const NetParams& net);
};

// Reverse-mode gradients of loss_mse(lista_forward(net, y), x_true). The
// soft-threshold derivative is 1 where |pre| > theta and 0 otherwise (ties
// take the zero branch). Frozen parameter groups get zero gradients.
NetGrads backward(const NetParams& net, const ForwardTape& tape, const SliceSet& y,
                  const Eigen::VectorXd& x_true, int threads = 1);
NetGrads backward(const NetParams& net, const SliceSet& y, const Eigen::VectorXd& x_true,
                  int threads = 1);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    long t = 0;
    NetGrads m;
    NetGrads v;
    // Per-layer units for theta and step. Adam sees theta / theta_scale and
    // step / step_scale, so lr is a relative rate for these scalars whatever
    // the magnitude of the Lipschitz constant.
    std::vector<double> theta_scale;
    std::vector<double> step_scale;

    // Zero moments; scales taken from the current parameter values.
    static AdamState zeros_like(const NetParams& net);
};

inline constexpr double kMinStep = 1e-12;

// Bias-corrected Adam on every trainable group; theta is clamped at 0 and
// step at kMinStep afterwards. Kernels and agg_w are updated in their own units.
void adam_step(NetParams& net, const NetGrads& grads, AdamState& state, const AdamConfig& cfg);

struct TrainConfig {
    int epochs = 50;
    int batch_per_epoch = 20;
    double lr = 1e-4;
    std::uint64_t seed = 0;
    int k_min = 1;
    int k_max = 5;
    double a_min = 0.5;
    double a_max = 1.0;
    double noise_std = 0.0;
    int threads = 1;

    void validate() const;
};

// k ~ U{k_min..k_max} scatterers at distinct uniformly drawn pixels with
// amplitudes ~ U[a_min, a_max].
std::pair<ReflectivityMap, ScattererList> random_map(std::mt19937_64& rng, const RoiGrid& roi,
                                                     const TrainConfig& cfg);

struct Sample {
    Eigen::VectorXd x;
    SliceSet y;
};

// Noiseless slices from the bank, optionally with AWGN added to the full
// volume and folded back.
Sample make_sample(std::mt19937_64& rng, const KernelBank& bank, const TrainConfig& cfg);

std::vector<Sample> make_dataset(std::uint64_t seed, int count, const KernelBank& bank,
                                 const TrainConfig& cfg);

struct TrainReport {
    std::vector<double> loss_trace;  // mean pre-update training loss per epoch
};

// Streaming Adam: one update per sample, in generation order.
TrainReport train(NetParams& net, const TrainConfig& cfg, const AcquisitionConfig& acq,
                  const RoiGrid& roi);

// lambda_frac times the mean ||A^T y||_inf over `count` random samples, a
// data-scale-aware threshold shared by every sample of a training run.
double reference_lambda(const KernelBank& bank, const TrainConfig& cfg, double lambda_frac,
                        std::uint64_t seed, int count = 8);

double mean_mse(const NetParams& net, const std::vector<Sample>& samples, int threads = 1);

}  // namespace bcfmc
