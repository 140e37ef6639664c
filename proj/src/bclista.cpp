#include "bcfmc/bclista.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bcfmc/error.hpp"

namespace bcfmc {

void NetParams::validate() const {
    BCFMC_REQUIRE(!layers.empty(), ContractError, "network needs at least one layer");
    const ConvGeometry& g = forward_bank.geom;
    for (const auto& layer : layers) {
        BCFMC_REQUIRE(layer.theta >= 0, ContractError, "theta must be non-negative");
        BCFMC_REQUIRE(layer.step > 0, ContractError, "step must be positive");
        BCFMC_REQUIRE(static_cast<int>(layer.g_kernels.size()) == g.n_c && layer.agg_w.size() == g.n_c,
                      ShapeError, "layer slice count does not match the forward bank");
        for (int i_s = 0; i_s < g.n_c; ++i_s) {
            BCFMC_REQUIRE(layer.g_kernels[i_s].rows() == g.n_t &&
                              layer.g_kernels[i_s].cols() == g.kernel_length(i_s),
                          ShapeError, "transpose kernel shape does not match the forward bank");
        }
    }
}

NetParams init_from_model(const KernelBank& bank, double lambda0, double l0, int k) {
    BCFMC_REQUIRE(l0 > 0, ContractError, "initial Lipschitz constant must be positive");
    BCFMC_REQUIRE(lambda0 >= 0, ContractError, "initial lambda must be non-negative");
    BCFMC_REQUIRE(k >= 1, ContractError, "network needs at least one layer");
    NetParams net;
    net.forward_bank = bank;
    LayerParams layer;
    layer.theta = lambda0 / l0;
    layer.step = 1.0 / l0;
    layer.g_kernels = bank.kernels;
    layer.agg_w = slice_weights(bank.n_c());
    net.layers.assign(k, layer);
    return net;
}

namespace {

Eigen::VectorXd run_layer(const Eigen::VectorXd& x, const SliceSet& y, const LayerParams& layer,
                          const KernelBank& fwd, int threads, LayerRecord* rec) {
    const ConvGeometry& g = fwd.geom;
    check_slices(y, g);
    BCFMC_REQUIRE(x.size() == g.map_length(), ShapeError, "iterate does not match the map size");

    SliceSet residual = y - conv_forward(fwd, x, threads);
    std::vector<Eigen::VectorXd> backproj(g.n_c);
    parallel_for(g.n_c, threads, [&](std::size_t i_s) {
        backproj[i_s] = apply_slice_transpose<double>(layer.g_kernels[i_s], g, static_cast<int>(i_s),
                                                      residual.slices[i_s]);
    });
    Eigen::VectorXd update = Eigen::VectorXd::Zero(g.map_length());
    for (int i_s = 0; i_s < g.n_c; ++i_s) update += layer.agg_w[i_s] * backproj[i_s];

    Eigen::VectorXd pre = x + layer.step * update;
    Eigen::VectorXd out(pre.size());
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
        const double mag = std::abs(pre[i]) - layer.theta;
        out[i] = mag > 0 ? std::copysign(mag, pre[i]) : 0.0;
    }
    if (rec) {
        rec->x_in = x;
        rec->residual = std::move(residual);
        rec->backproj = std::move(backproj);
        rec->update = std::move(update);
        rec->pre = std::move(pre);
    }
    return out;
}

}  // namespace

Eigen::VectorXd lista_layer(const Eigen::VectorXd& x, const SliceSet& y, const LayerParams& layer,
                            const KernelBank& forward_bank, int threads) {
    return run_layer(x, y, layer, forward_bank, threads, nullptr);
}

ForwardTape lista_forward_recorded(const NetParams& net, const SliceSet& y, int threads) {
    net.validate();
    ForwardTape tape;
    tape.layers.resize(net.depth());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(net.forward_bank.geom.map_length());
    for (int k = 0; k < net.depth(); ++k) {
        x = run_layer(x, y, net.layers[k], net.forward_bank, threads, &tape.layers[k]);
        if (!x.allFinite())
            throw NumericalError("non-finite activation in layer " + std::to_string(k));
    }
    tape.output = std::move(x);
    return tape;
}

Eigen::VectorXd lista_forward(const NetParams& net, const SliceSet& y, int threads) {
    net.validate();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(net.forward_bank.geom.map_length());
    for (int k = 0; k < net.depth(); ++k) {
        x = run_layer(x, y, net.layers[k], net.forward_bank, threads, nullptr);
        if (!x.allFinite())
            throw NumericalError("non-finite activation in layer " + std::to_string(k));
    }
    return x;
}

double loss_mse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
    BCFMC_REQUIRE(estimate.size() == truth.size() && truth.size() > 0, ShapeError,
                  "estimate and truth differ in size");
    return (estimate - truth).squaredNorm() / static_cast<double>(truth.size());
}

NetGrads NetGrads::zeros_like(const NetParams& net) {
    NetGrads g;
    g.layers.resize(net.depth());
    for (int k = 0; k < net.depth(); ++k) {
        auto& lg = g.layers[k];
        for (const auto& kern : net.layers[k].g_kernels)
            lg.g_kernels.push_back(RowMatrix<double>::Zero(kern.rows(), kern.cols()));
        lg.agg_w = Eigen::VectorXd::Zero(net.layers[k].agg_w.size());
    }
    if (net.trainable.forward) {
        for (const auto& kern : net.forward_bank.kernels)
            g.forward.push_back(RowMatrix<double>::Zero(kern.rows(), kern.cols()));
    }
    return g;
}

NetGrads backward(const NetParams& net, const ForwardTape& tape, const SliceSet& y,
                  const Eigen::VectorXd& x_true, int threads) {
    BCFMC_REQUIRE(static_cast<int>(tape.layers.size()) == net.depth(), ShapeError,
                  "tape depth does not match the network");
    const ConvGeometry& geom = net.forward_bank.geom;
    const Eigen::Index n = geom.map_length();
    BCFMC_REQUIRE(x_true.size() == n, ShapeError, "target does not match the map size");
    check_slices(y, geom);

    NetGrads grads = NetGrads::zeros_like(net);
    grads.loss = loss_mse(tape.output, x_true);
    Eigen::VectorXd gx = (2.0 / static_cast<double>(n)) * (tape.output - x_true);

    for (int k = net.depth() - 1; k >= 0; --k) {
        const LayerParams& layer = net.layers[k];
        const LayerRecord& rec = tape.layers[k];
        LayerGrads& lg = grads.layers[k];

        Eigen::VectorXd gv = Eigen::VectorXd::Zero(n);
        double gtheta = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(rec.pre[i]) > layer.theta) {
                gv[i] = gx[i];
                gtheta -= std::copysign(1.0, rec.pre[i]) * gx[i];
            }
        }
        if (net.trainable.theta) lg.theta = gtheta;
        if (net.trainable.step) lg.step = gv.dot(rec.update);

        const Eigen::VectorXd gb = layer.step * gv;
        std::vector<Eigen::VectorXd> gx_parts(geom.n_c);
        parallel_for(geom.n_c, threads, [&](std::size_t s) {
            const int i_s = static_cast<int>(s);
            const double w = layer.agg_w[i_s];
            if (net.trainable.agg_w) lg.agg_w[i_s] = gb.dot(rec.backproj[i_s]);
            if (net.trainable.g_kernels)
                kernel_gradient_add<double>(geom, i_s, rec.residual.slices[i_s], gb, w, lg.g_kernels[i_s]);
            // Sensitivity of the residual slice, then through r = y - B x.
            const ColMatrix<double> gr = w * apply_slice<double>(layer.g_kernels[i_s], geom, i_s, gb);
            gx_parts[s] = apply_slice_transpose<double>(net.forward_bank.kernels[i_s], geom, i_s, gr);
            if (net.trainable.forward)
                kernel_gradient_add<double>(geom, i_s, gr, rec.x_in, -1.0, grads.forward[i_s]);
        });
        // Partials are summed in slice order for a thread-count independent result.
        Eigen::VectorXd gx_prev = gv;
        for (int i_s = 0; i_s < geom.n_c; ++i_s) gx_prev -= gx_parts[i_s];
        if (!gx_prev.allFinite() || !std::isfinite(lg.theta) || !std::isfinite(lg.step))
            throw NumericalError("non-finite gradient in layer " + std::to_string(k));
        gx = std::move(gx_prev);
    }
    return grads;
}

NetGrads backward(const NetParams& net, const SliceSet& y, const Eigen::VectorXd& x_true,
                  int threads) {
    return backward(net, lista_forward_recorded(net, y, threads), y, x_true, threads);
}

AdamState AdamState::zeros_like(const NetParams& net) {
    AdamState st{0, NetGrads::zeros_like(net), NetGrads::zeros_like(net), {}, {}};
    for (const auto& layer : net.layers) {
        st.step_scale.push_back(layer.step);
        st.theta_scale.push_back(layer.theta > 0 ? layer.theta : layer.step);
    }
    return st;
}

namespace {

struct AdamUpdate {
    const AdamConfig& cfg;
    double bc1;
    double bc2;

    // Scalar in units of `scale`: the moments track d loss / d(param / scale).
    void operator()(double& param, double grad, double& m, double& v, double scale) const {
        const double g = grad * scale;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        param -= scale * cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
    }

    template <class M>
    void array(M& param, const M& grad, M& m, M& v) const {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v.array() = cfg.beta2 * v.array() + (1.0 - cfg.beta2) * grad.array().square();
        param.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
    }
};

}  // namespace

void adam_step(NetParams& net, const NetGrads& grads, AdamState& state, const AdamConfig& cfg) {
    BCFMC_REQUIRE(grads.layers.size() == net.layers.size() &&
                      state.m.layers.size() == net.layers.size(),
                  ShapeError, "gradient or moment state does not match the network");
    BCFMC_REQUIRE(state.theta_scale.size() == net.layers.size() &&
                      state.step_scale.size() == net.layers.size(),
                  ShapeError, "optimizer scales do not match the network");
    state.t += 1;
    const AdamUpdate upd{cfg, 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t)),
                         1.0 - std::pow(cfg.beta2, static_cast<double>(state.t))};
    for (int k = 0; k < net.depth(); ++k) {
        LayerParams& p = net.layers[k];
        const LayerGrads& g = grads.layers[k];
        LayerGrads& m = state.m.layers[k];
        LayerGrads& v = state.v.layers[k];
        if (net.trainable.theta) {
            upd(p.theta, g.theta, m.theta, v.theta, state.theta_scale[k]);
            p.theta = std::max(p.theta, 0.0);
        }
        if (net.trainable.step) {
            upd(p.step, g.step, m.step, v.step, state.step_scale[k]);
            p.step = std::max(p.step, kMinStep);
        }
        if (net.trainable.agg_w) {
            upd.array(p.agg_w, g.agg_w, m.agg_w, v.agg_w);
        }
        if (net.trainable.g_kernels) {
            for (std::size_t s = 0; s < p.g_kernels.size(); ++s) {
                upd.array(p.g_kernels[s], g.g_kernels[s], m.g_kernels[s], v.g_kernels[s]);
            }
        }
    }
    if (net.trainable.forward) {
        for (std::size_t s = 0; s < net.forward_bank.kernels.size(); ++s) {
            upd.array(net.forward_bank.kernels[s], grads.forward[s], state.m.forward[s],
                      state.v.forward[s]);
        }
    }
}

void TrainConfig::validate() const {
    BCFMC_REQUIRE(epochs >= 1 && batch_per_epoch >= 1, ContractError,
                  "epochs and batch_per_epoch must be positive");
    BCFMC_REQUIRE(lr >= 0, ContractError, "learning rate must be non-negative");
    BCFMC_REQUIRE(k_min >= 1 && k_max >= k_min, ContractError, "invalid scatterer count range");
    BCFMC_REQUIRE(a_max >= a_min, ContractError, "invalid amplitude range");
    BCFMC_REQUIRE(noise_std >= 0, ContractError, "noise_std must be non-negative");
}

std::pair<ReflectivityMap, ScattererList> random_map(std::mt19937_64& rng, const RoiGrid& roi,
                                                     const TrainConfig& cfg) {
    const int pixels = roi.pixel_count();
    BCFMC_REQUIRE(cfg.k_max <= pixels, ContractError, "k_max exceeds the pixel count");
    BCFMC_REQUIRE(cfg.k_min >= 1 && cfg.k_min <= cfg.k_max, ContractError,
                  "invalid scatterer count range");
    std::uniform_int_distribution<int> count(cfg.k_min, cfg.k_max);
    const int k = count(rng);

    // Partial Fisher-Yates over pixel indices gives k distinct pixels.
    std::vector<int> idx(pixels);
    std::iota(idx.begin(), idx.end(), 0);
    std::uniform_real_distribution<double> amp(cfg.a_min, cfg.a_max);
    ScattererList list;
    list.reserve(k);
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, pixels - 1);
        std::swap(idx[i], idx[pick(rng)]);
        list.push_back({idx[i] / roi.n_z, idx[i] % roi.n_z, amp(rng)});
    }
    return {make_map(roi, list), list};
}

Sample make_sample(std::mt19937_64& rng, const KernelBank& bank, const TrainConfig& cfg) {
    auto [map, list] = random_map(rng, bank.roi, cfg);
    Sample s{vectorize(map), conv_forward(bank, vectorize(map), cfg.threads)};
    if (cfg.noise_std > 0) {
        FmcVolume v = assemble_volume(s.y);
        std::normal_distribution<double> noise(0.0, cfg.noise_std);
        for (auto& e : v.data) e += noise(rng);
        s.y = extract_slices(v);
    }
    return s;
}

std::vector<Sample> make_dataset(std::uint64_t seed, int count, const KernelBank& bank,
                                 const TrainConfig& cfg) {
    std::mt19937_64 rng(seed);
    std::vector<Sample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(make_sample(rng, bank, cfg));
    return out;
}

TrainReport train(NetParams& net, const TrainConfig& cfg, const AcquisitionConfig& acq,
                  const RoiGrid& roi) {
    cfg.validate();
    net.validate();
    const KernelBank data_bank = build_kernel_bank(acq, roi);
    BCFMC_REQUIRE(data_bank.geom == net.forward_bank.geom, ShapeError,
                  "network shapes do not match the acquisition");

    std::mt19937_64 rng(cfg.seed);
    AdamState state = AdamState::zeros_like(net);
    const AdamConfig adam{cfg.lr};
    TrainReport report;
    report.loss_trace.reserve(cfg.epochs);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double total = 0.0;
        for (int b = 0; b < cfg.batch_per_epoch; ++b) {
            const Sample s = make_sample(rng, data_bank, cfg);
            const NetGrads g = backward(net, s.y, s.x, cfg.threads);
            total += g.loss;
            adam_step(net, g, state, adam);
        }
        report.loss_trace.push_back(total / cfg.batch_per_epoch);
    }
    return report;
}

double reference_lambda(const KernelBank& bank, const TrainConfig& cfg, double lambda_frac,
                        std::uint64_t seed, int count) {
    BCFMC_REQUIRE(count >= 1, ContractError, "calibration needs at least one sample");
    const Eigen::VectorXd w = slice_weights(bank.n_c());
    double total = 0.0;
    for (const auto& s : make_dataset(seed, count, bank, cfg))
        total += conv_adjoint(bank, s.y, w, cfg.threads).lpNorm<Eigen::Infinity>();
    return lambda_frac * total / count;
}

double mean_mse(const NetParams& net, const std::vector<Sample>& samples, int threads) {
    BCFMC_REQUIRE(!samples.empty(), ContractError, "no samples");
    double total = 0.0;
    for (const auto& s : samples) total += loss_mse(lista_forward(net, s.y, threads), s.x);
    return total / static_cast<double>(samples.size());
}

}  // namespace bcfmc
