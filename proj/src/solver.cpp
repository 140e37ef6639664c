#include "bcfmc/solver.hpp"

#include <cmath>
#include <random>
#include <string>

#include "bcfmc/error.hpp"

namespace bcfmc {

void LassoProblem::validate() const {
    BCFMC_REQUIRE(bank != nullptr, ContractError, "problem has no kernel bank");
    BCFMC_REQUIRE(lambda >= 0, ContractError, "lambda must be non-negative");
    BCFMC_REQUIRE(weights.size() == bank->n_c(), ShapeError, "weight count does not match slices");
    check_slices(y, bank->geom);
}

LassoProblem make_problem(const KernelBank& bank, SliceSet y, double lambda) {
    LassoProblem p{&bank, std::move(y), slice_weights(bank.n_c()), lambda};
    p.validate();
    return p;
}

Eigen::VectorXd soft_threshold(const Eigen::Ref<const Eigen::VectorXd>& v, double theta) {
    BCFMC_REQUIRE(theta >= 0, ContractError, "threshold must be non-negative");
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double mag = std::abs(v[i]) - theta;
        out[i] = mag > 0 ? std::copysign(mag, v[i]) : 0.0;
    }
    return out;
}

LipschitzEstimate lipschitz_estimate(const KernelBank& bank, const Eigen::VectorXd& weights,
                                     const LipschitzOptions& opts) {
    std::mt19937_64 gen(opts.seed);
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(bank.geom.map_length());
    for (auto& e : v) e = normal(gen);
    v.normalize();

    LipschitzEstimate est;
    double previous = 0.0;
    for (int it = 1; it <= opts.max_iters; ++it) {
        const Eigen::VectorXd w =
            conv_adjoint(bank, conv_forward(bank, v, opts.threads), weights, opts.threads);
        const double rayleigh = v.dot(w);
        const double norm = w.norm();
        est.iterations = it;
        if (norm == 0.0) {
            est.value = 0.0;
            est.zero_operator = true;
            return est;
        }
        est.value = rayleigh;
        if (it > 1 && std::abs(rayleigh - previous) < opts.tol * std::abs(rayleigh)) {
            est.converged = true;
            break;
        }
        previous = rayleigh;
        v = w / norm;
    }
    return est;
}

Eigen::VectorXd lasso_gradient(const LassoProblem& prob, const Eigen::VectorXd& x, int threads) {
    const SliceSet residual = conv_forward(*prob.bank, x, threads) - prob.y;
    return conv_adjoint(*prob.bank, residual, prob.weights, threads);
}

double lasso_objective(const LassoProblem& prob, const Eigen::VectorXd& x, int threads) {
    const SliceSet residual = conv_forward(*prob.bank, x, threads) - prob.y;
    return 0.5 * weighted_dot(residual, residual, prob.weights) + prob.lambda * x.lpNorm<1>();
}

double lambda_max(const KernelBank& bank, const SliceSet& y, int threads) {
    return conv_adjoint(bank, y, slice_weights(bank.n_c()), threads).lpNorm<Eigen::Infinity>();
}

namespace {

FistaResult run(const LassoProblem& prob, const Eigen::VectorXd& x0, const FistaOptions& opts,
                bool momentum) {
    prob.validate();
    BCFMC_REQUIRE(opts.n_iter >= 1, ContractError, "n_iter must be >= 1");
    BCFMC_REQUIRE(x0.size() == prob.bank->geom.map_length(), ShapeError,
                  "initial guess does not match the map size");

    FistaResult res;
    if (opts.lipschitz) {
        res.lipschitz = *opts.lipschitz;
    } else {
        LipschitzOptions power = opts.power;
        power.threads = opts.threads;
        res.lipschitz = kLipschitzSafety * lipschitz_estimate(*prob.bank, prob.weights, power).value;
    }
    BCFMC_REQUIRE(res.lipschitz > 0 && std::isfinite(res.lipschitz), NumericalError,
                  "Lipschitz constant must be positive and finite");
    const double inv_l = 1.0 / res.lipschitz;
    const double theta = prob.lambda * inv_l;

    Eigen::VectorXd x = x0;
    Eigen::VectorXd z = x0;
    double t = 1.0;
    res.objective.reserve(opts.n_iter);
    for (int k = 0; k < opts.n_iter; ++k) {
        const Eigen::VectorXd step = z - inv_l * lasso_gradient(prob, z, opts.threads);
        Eigen::VectorXd x_next = soft_threshold(step, theta);
        if (!x_next.allFinite())
            throw NumericalError("non-finite iterate at iteration " + std::to_string(k));
        if (momentum) {
            const double t_next = next_momentum(t);
            z = x_next + ((t - 1.0) / t_next) * (x_next - x);
            t = t_next;
        } else {
            z = x_next;
        }
        x = std::move(x_next);
        res.objective.push_back(lasso_objective(prob, x, opts.threads));
        if (opts.on_iterate) opts.on_iterate(k, x);
    }
    res.x = std::move(x);
    return res;
}

}  // namespace

FistaResult bc_fista(const LassoProblem& prob, const Eigen::VectorXd& x0, const FistaOptions& opts) {
    return run(prob, x0, opts, true);
}

FistaResult ista(const LassoProblem& prob, const Eigen::VectorXd& x0, const FistaOptions& opts) {
    return run(prob, x0, opts, false);
}

}  // namespace bcfmc
