#include <doctest.h>

#include <random>

#include "bcfmc/dense_model.hpp"
#include "bcfmc/error.hpp"
#include "bcfmc/solver.hpp"
#include "oracles.hpp"

using namespace bcfmc;

namespace {

struct Fixture {
    AcquisitionConfig acq;
    RoiGrid roi;
    KernelBank bank;
    DenseModel dense;

    explicit Fixture(int n_c, int n = 0) {
        acq.n_c = n_c;
        roi = square_roi(acq, n == 0 ? n_c : n);
        bank = build_kernel_bank(acq, roi);
        dense = build_dense(acq, roi);
    }
};

SliceSet measure(const KernelBank& bank, const Eigen::VectorXd& x) { return conv_forward(bank, x); }

}  // namespace

TEST_CASE("soft threshold") {
    Eigen::VectorXd v(5);
    v << 3.0, -0.5, 1.0, -4.0, 0.0;
    const Eigen::VectorXd s = soft_threshold(v, 1.0);
    CHECK(s[0] == 2.0);
    CHECK(s[1] == 0.0);
    CHECK(s[2] == 0.0);
    CHECK(s[3] == -3.0);
    CHECK(s[4] == 0.0);
    CHECK((soft_threshold(v, 0.0) - v).norm() == 0.0);
    CHECK_THROWS_AS(soft_threshold(v, -0.1), ContractError);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> theta_dist(0.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::VectorXd u = oracle::random_vector(rng, 16);
        const double theta = theta_dist(rng);
        const Eigen::VectorXd out = soft_threshold(u, theta);
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            REQUIRE(std::abs(out[i]) <= std::max(std::abs(u[i]) - theta, 0.0) + 1e-15);
            REQUIRE(out[i] * u[i] >= 0.0);
        }
    }
}

TEST_CASE("Lipschitz estimate") {
    SUBCASE("matches the largest eigenvalue of the explicit normal matrix") {
        for (int n_c : {2, 4, 6}) {
            Fixture f(n_c);
            const double truth = oracle::max_eigenvalue(f.dense.a);
            LipschitzOptions opts;
            opts.max_iters = 2000;
            opts.tol = 1e-10;
            const auto est = lipschitz_estimate(f.bank, slice_weights(n_c), opts);
            CHECK(est.converged);
            CHECK(std::abs(est.value - truth) <= 1e-4 * truth);
        }
    }
    SUBCASE("scales quadratically with the operator") {
        Fixture f(4);
        KernelBank scaled = f.bank;
        for (auto& k : scaled.kernels) k *= 3.0;
        LipschitzOptions opts;
        opts.max_iters = 2000;
        opts.tol = 1e-12;
        const double base = lipschitz_estimate(f.bank, slice_weights(4), opts).value;
        CHECK(std::abs(lipschitz_estimate(scaled, slice_weights(4), opts).value - 9.0 * base) <= 1e-6 * 9.0 * base);
    }
    SUBCASE("bounded below by every column energy") {
        Fixture f(4);
        const double est = lipschitz_estimate(f.bank, slice_weights(4)).value;
        for (Eigen::Index j = 0; j < f.dense.a.cols(); ++j)
            CHECK(f.dense.a.col(j).squaredNorm() <= est * (1 + 1e-9));
    }
    SUBCASE("zero operator is flagged") {
        Fixture f(3);
        for (auto& k : f.bank.kernels) k.setZero();
        const auto est = lipschitz_estimate(f.bank, slice_weights(3));
        CHECK(est.zero_operator);
        CHECK(est.value == 0.0);
        auto prob = make_problem(f.bank, SliceSet::zeros(f.bank.n_t(), 3), 0.1);
        CHECK_THROWS_AS(bc_fista(prob, Eigen::VectorXd::Zero(9), FistaOptions{}), NumericalError);
    }
}

TEST_CASE("lasso objective") {
    Fixture f(4);
    std::mt19937_64 rng(5);
    const Eigen::VectorXd x_true = oracle::random_vector(rng, 16);
    const SliceSet y = measure(f.bank, x_true);
    const Eigen::VectorXd w = slice_weights(4);

    auto prob = make_problem(f.bank, y, 0.3);
    CHECK(lasso_objective(prob, Eigen::VectorXd::Zero(16)) == doctest::Approx(0.5 * weighted_dot(y, y, w)).epsilon(1e-14));
    prob.lambda = 0.0;
    CHECK(lasso_objective(prob, x_true) <= 1e-20 * weighted_dot(y, y, w));

    // The folded data term equals the full-volume least squares term.
    const Eigen::VectorXd full_y = assemble_volume(y).data;
    const Eigen::VectorXd x = oracle::random_vector(rng, 16);
    const double full = 0.5 * (dense_forward(f.dense, x) - full_y).squaredNorm();
    CHECK(lasso_objective(prob, x) == doctest::Approx(full).epsilon(1e-12));

    // Gradient matches the explicit normal equations.
    const Eigen::VectorXd g = lasso_gradient(prob, x);
    const Eigen::VectorXd g_ref = f.dense.a.transpose() * (f.dense.a * x - full_y);
    CHECK((g - g_ref).norm() <= 1e-12 * g_ref.norm());

    CHECK(lambda_max(f.bank, y) == doctest::Approx((f.dense.a.transpose() * full_y).lpNorm<Eigen::Infinity>()).epsilon(1e-12));

    SliceSet bad = y;
    bad.slices.pop_back();
    CHECK_THROWS_AS(make_problem(f.bank, bad, 0.1), ShapeError);
    CHECK_THROWS_AS(make_problem(f.bank, y, -1.0), ContractError);
}

TEST_CASE("FISTA") {
    CHECK(next_momentum(1.0) == doctest::Approx((1.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-15));

    Fixture f(4);
    std::mt19937_64 rng(7);
    const Eigen::VectorXd x_true = oracle::random_vector(rng, 16);
    const SliceSet y = measure(f.bank, x_true);
    const Eigen::VectorXd full_y = assemble_volume(y).data;
    const double lmax = lambda_max(f.bank, y);

    SUBCASE("iterates match a textbook implementation on the explicit matrix") {
        const double lambda = 0.05 * lmax;
        const double l = 1.05 * oracle::max_eigenvalue(f.dense.a);
        auto prob = make_problem(f.bank, y, lambda);
        for (bool momentum : {true, false}) {
            FistaOptions opts;
            opts.n_iter = 40;
            opts.lipschitz = l;
            std::vector<Eigen::VectorXd> seen;
            opts.on_iterate = [&](int, const Eigen::VectorXd& x) { seen.push_back(x); };
            const Eigen::VectorXd x0 = oracle::random_vector(rng, 16);
            const auto res = momentum ? bc_fista(prob, x0, opts) : ista(prob, x0, opts);
            const auto ref = oracle::dense_fista(f.dense.a, full_y, lambda, l, x0, 40, momentum);
            REQUIRE(seen.size() == ref.size());
            REQUIRE(res.objective.size() == 40);
            for (std::size_t k = 0; k < ref.size(); ++k)
                REQUIRE((seen[k] - ref[k]).norm() <= 1e-8 * std::max(1.0, ref[k].norm()));
            CHECK((res.x - ref.back()).norm() <= 1e-8 * ref.back().norm());
        }
    }
    SUBCASE("lambda at or above lambda_max gives zero after one step from zero") {
        auto prob = make_problem(f.bank, y, lmax * 1.0001);
        FistaOptions opts;
        opts.n_iter = 1;
        const auto res = bc_fista(prob, Eigen::VectorXd::Zero(16), opts);
        CHECK(res.x.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("zero data stays at zero") {
        auto prob = make_problem(f.bank, SliceSet::zeros(f.bank.n_t(), 4), 0.1);
        FistaOptions opts;
        opts.n_iter = 10;
        CHECK(bc_fista(prob, Eigen::VectorXd::Zero(16), opts).x.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("objective decreases below the start and a converged point is a fixed point") {
        auto prob = make_problem(f.bank, y, 0.02 * lmax);
        FistaOptions opts;
        opts.n_iter = 3000;
        const auto res = bc_fista(prob, Eigen::VectorXd::Zero(16), opts);
        CHECK(res.objective.back() <= lasso_objective(prob, Eigen::VectorXd::Zero(16)));
        CHECK(res.lipschitz > 0.0);
        // Prox-gradient map at the converged point.
        const Eigen::VectorXd again =
            soft_threshold(res.x - lasso_gradient(prob, res.x) / res.lipschitz, prob.lambda / res.lipschitz);
        CHECK((again - res.x).norm() <= 1e-6 * res.x.norm());
        // First-order optimality on the support and off it.
        const Eigen::VectorXd g = lasso_gradient(prob, res.x);
        for (Eigen::Index i = 0; i < 16; ++i) {
            if (res.x[i] != 0.0)
                CHECK(std::abs(g[i] + prob.lambda * (res.x[i] > 0 ? 1 : -1)) <= 1e-4 * prob.lambda);
            else
                CHECK(std::abs(g[i]) <= prob.lambda * (1 + 1e-4));
        }
    }
    SUBCASE("thread count does not change the result") {
        auto prob = make_problem(f.bank, y, 0.05 * lmax);
        FistaOptions opts;
        opts.n_iter = 25;
        opts.lipschitz = 1.05 * oracle::max_eigenvalue(f.dense.a);
        const auto a = bc_fista(prob, Eigen::VectorXd::Zero(16), opts);
        opts.threads = 3;
        const auto b = bc_fista(prob, Eigen::VectorXd::Zero(16), opts);
        CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("invalid step constants are rejected") {
        auto prob = make_problem(f.bank, y, 0.1);
        FistaOptions opts;
        opts.lipschitz = -1.0;
        CHECK_THROWS_AS(bc_fista(prob, Eigen::VectorXd::Zero(16), opts), NumericalError);
        opts.lipschitz = 1.0;
        CHECK_THROWS_AS(bc_fista(prob, Eigen::VectorXd::Zero(15), opts), ShapeError);
    }
}
