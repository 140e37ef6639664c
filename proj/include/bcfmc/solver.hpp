#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bcfmc/conv_model.hpp"

namespace bcfmc {

// 1/2 sum_s w_s ||B_s x - y_s||^2 + lambda ||x||_1 over a folded slice set.
struct LassoProblem {
    const KernelBank* bank = nullptr;
    SliceSet y;
    Eigen::VectorXd weights;
    double lambda = 0.0;

    void validate() const;
};

LassoProblem make_problem(const KernelBank& bank, SliceSet y, double lambda);

Eigen::VectorXd soft_threshold(const Eigen::Ref<const Eigen::VectorXd>& v, double theta);

struct LipschitzEstimate {
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    bool zero_operator = false;
};

struct LipschitzOptions {
    int max_iters = 100;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    int threads = 1;
};

// Power iteration on x -> conv_adjoint(conv_forward(x)), Rayleigh-quotient estimate.
LipschitzEstimate lipschitz_estimate(const KernelBank& bank, const Eigen::VectorXd& weights,
                                     const LipschitzOptions& opts = {});

// Gradient of the smooth part: sum_s w_s B_s^T (B_s x - y_s).
Eigen::VectorXd lasso_gradient(const LassoProblem& prob, const Eigen::VectorXd& x, int threads = 1);

double lasso_objective(const LassoProblem& prob, const Eigen::VectorXd& x, int threads = 1);

// ||A^T y||_inf evaluated matrix-free: the smallest lambda with a zero solution.
double lambda_max(const KernelBank& bank, const SliceSet& y, int threads = 1);

inline constexpr double kLipschitzSafety = 1.05;

struct FistaOptions {
    int n_iter = 100;
    // Step constant. When unset, kLipschitzSafety times the power-iteration estimate.
    std::optional<double> lipschitz;
    LipschitzOptions power{};
    int threads = 1;
    // Called with (k, x_{k+1}) after every iteration.
    std::function<void(int, const Eigen::VectorXd&)> on_iterate;
};

struct FistaResult {
    Eigen::VectorXd x;
    std::vector<double> objective;  // objective[k] after iteration k; size n_iter
    double lipschitz = 0.0;
};

// FISTA with soft-thresholding prox and Nesterov momentum.
FistaResult bc_fista(const LassoProblem& prob, const Eigen::VectorXd& x0, const FistaOptions& opts);

// Same loop without momentum (z_k = x_k).
FistaResult ista(const LassoProblem& prob, const Eigen::VectorXd& x0, const FistaOptions& opts);

inline double next_momentum(double t) { return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t)); }

}  // namespace bcfmc
