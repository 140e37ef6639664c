#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bcfmc/commands.hpp"
#include "bcfmc/dense_model.hpp"
#include "bcfmc/error.hpp"
#include "bcfmc/solver.hpp"
#include "oracles.hpp"

using namespace bcfmc;
namespace fs = std::filesystem;

namespace {

fs::path workdir() {
    const fs::path dir = fs::temp_directory_path() / "bcfmc_test_cli";
    fs::create_directories(dir);
    return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

std::vector<std::string> lines(const std::string& file) {
    std::ifstream is(file);
    std::vector<std::string> out;
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

std::string write_text(const std::string& name, const std::string& text) {
    const std::string p = path(name);
    std::ofstream(p) << text;
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(BCFMC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig small_config(int n_c = 4) {
    RunConfig c;
    c.n_c = c.n_x = c.n_z = n_c;
    c.k_max = n_c;
    return c;
}

Eigen::MatrixXd matrix(const std::string& file, const std::string& name) {
    return TensorFile::read(file).get(name).as_matrix();
}

}  // namespace

TEST_CASE("simulate") {
    RunConfig c = small_config();
    SUBCASE("empty scatterer set gives zero slices and truth") {
        c.scatterers_file = write_text("none.csv", "i_x,i_z,a\n");
        cmd_simulate(c, path("empty.btf"));
        const TensorFile f = TensorFile::read(path("empty.btf"));
        for (int s = 0; s < 4; ++s) CHECK(f.get("slices/" + std::to_string(s)).as_matrix().cwiseAbs().maxCoeff() == 0.0);
        CHECK(f.get("truth").as_matrix().cwiseAbs().maxCoeff() == 0.0);
        CHECK(f.find("meta/config_hash") != nullptr);
        CHECK(fs::exists(path("empty.btf.cfg")));
    }
    SUBCASE("matches the dense model and writes a reciprocal volume") {
        c.scatterers_file = write_text("two.csv", "i_x,i_z,a\n1,2,0.8\n3,0,-0.5\n");
        c.write_volume = true;
        cmd_simulate(c, path("two.btf"));
        const TensorFile f = TensorFile::read(path("two.btf"));
        const AcquisitionConfig acq = c.acquisition();
        const RoiGrid roi = c.roi();
        const DenseModel dm = build_dense(acq, roi);
        const Eigen::VectorXd x = vectorize(f.get("truth").as_matrix());
        CHECK(x[1 * 4 + 2] == 0.8);
        const auto vol = f.get("volume").as_f64();
        const Eigen::VectorXd ref = dense_forward(dm, x);
        REQUIRE(vol.size() == static_cast<std::size_t>(ref.size()));
        CHECK((Eigen::Map<const Eigen::VectorXd>(vol.data(), ref.size()) - ref).norm() <= 1e-12 * ref.norm());
        const SliceSet y = read_measurements(f);
        CHECK(read_geometry(f) == ConvGeometry{4, 4, 4, y.n_t()});
        CHECK(lines(path("two.btf.scatterers.csv")).size() == 3);
    }
    SUBCASE("random scatterers are reproducible from the seed") {
        c.seed = 5;
        cmd_simulate(c, path("r1.btf"));
        cmd_simulate(c, path("r2.btf"));
        c.seed = 6;
        cmd_simulate(c, path("r3.btf"));
        CHECK(TensorFile::read(path("r1.btf")) == TensorFile::read(path("r2.btf")));
        CHECK(matrix(path("r1.btf"), "truth") != matrix(path("r3.btf"), "truth"));
    }
    SUBCASE("pitch mismatch is a validation error") {
        c.d_x = 0.3e-3;
        CHECK_THROWS_AS(cmd_simulate(c, path("bad.btf")), ContractError);
    }
}

TEST_CASE("build-kernels, fista and render") {
    RunConfig c = small_config();
    c.scatterers_file = write_text("one.csv", "i_x,i_z,a\n2,1,1.0\n");
    cmd_simulate(c, path("data.btf"));

    cmd_build_kernels(c, path("kernels.btf"));
    const KernelBank bank = build_kernel_bank(c.acquisition(), c.roi());
    for (int s = 0; s < 4; ++s)
        CHECK(matrix(path("kernels.btf"), "kernels/" + std::to_string(s)) == Eigen::MatrixXd(bank.kernels[s]));

    c.iters = 30;
    c.lipschitz = 1.05 * oracle::max_eigenvalue(build_dense(c.acquisition(), c.roi()).a);
    cmd_fista(c, path("data.btf"), path("rec.btf"));
    const Eigen::MatrixXd rec = matrix(path("rec.btf"), "reconstruction");
    CHECK(rec.rows() == 4);
    CHECK(rec.cols() == 4);
    const SliceSet y = read_measurements(TensorFile::read(path("data.btf")));
    FistaOptions opts;
    opts.n_iter = 30;
    opts.lipschitz = c.lipschitz;
    const auto ref = bc_fista(make_problem(bank, y, c.lambda_frac * lambda_max(bank, y)),
                              Eigen::VectorXd::Zero(16), opts);
    CHECK((vectorize(rec) - ref.x).norm() <= 1e-12 * ref.x.norm());
    const auto trace = lines(path("rec.btf.trace.csv"));
    REQUIRE(trace.size() == 31);
    CHECK(trace[0] == "iteration,objective,lambda,lipschitz,config_hash,seed");

    RunConfig wrong = small_config(3);
    CHECK_THROWS_AS(cmd_fista(wrong, path("data.btf"), path("x.btf")), ShapeError);

    cmd_render(path("rec.btf"), path("rec.pgm"));
    std::ifstream is(path("rec.pgm"), std::ios::binary);
    std::string magic;
    is >> magic;
    CHECK(magic == "P5");
    CHECK_THROWS_AS(cmd_render(path("kernels.btf.cfg"), path("x.pgm")), IoError);
}

TEST_CASE("lista-train and lista-infer") {
    RunConfig c = small_config(3);
    c.layers = 2;
    c.epochs = 2;
    c.batch_per_epoch = 3;
    c.lr = 0.0;
    c.seed = 4;
    cmd_lista_train(c, path("net.btf"));
    const auto loss = lines(path("net.btf.loss.csv"));
    REQUIRE(loss.size() == 3);
    CHECK(loss[0].rfind("epoch,loss,", 0) == 0);

    c.scatterers_file = write_text("s3.csv", "i_x,i_z,a\n0,0,1.0\n2,1,0.5\n");
    cmd_simulate(c, path("d3.btf"));
    cmd_lista_infer(c, path("net.btf"), path("d3.btf"), path("inf.btf"));

    // With lr = 0 the network is the initialization: two ISTA steps.
    const NetParams net = net_from_tensors(TensorFile::read(path("net.btf")));
    const SliceSet y = read_measurements(TensorFile::read(path("d3.btf")));
    FistaOptions opts;
    opts.n_iter = 2;
    opts.lipschitz = 1.0 / net.layers[0].step;
    const auto ref = ista(make_problem(net.forward_bank, y, net.layers[0].lambda()), Eigen::VectorXd::Zero(9), opts);
    CHECK((vectorize(matrix(path("inf.btf"), "reconstruction")) - ref.x).norm() <= 1e-10 * std::max(1.0, ref.x.norm()));
}

TEST_CASE("bench") {
    RunConfig c;
    c.bench_sizes = {2, 3};
    c.bench_reps = 2;
    c.layers = 2;
    c.lipschitz_iters = 20;
    cmd_bench(c, path("bench.csv"));
    const auto rows = lines(path("bench.csv"));
    REQUIRE(rows.size() == 3);
    // n=2: dense 16 N_t, conv 10 N_t coefficients.
    const auto r = run_bench(c);
    CHECK(r[0].timed);
    CHECK(r[0].dense_bytes == 16ull * r[0].n_t * 4);
    CHECK(r[0].conv_bytes == 10ull * r[0].n_t * 4);
    CHECK(r[0].ratio() == doctest::Approx(1.6));
    CHECK(r[1].fista_min <= r[1].fista_avg);
    CHECK(r[1].fista_avg <= r[1].fista_max);

    c.bench_sizes = {128};
    c.memory_budget = 1 << 20;
    const auto big = run_bench(c);
    CHECK_FALSE(big[0].timed);
    CHECK(big[0].ratio() > 80.0);
}

TEST_CASE("command-line binary") {
    const std::string cfg = write_text("cli.cfg", "n_c = 3\nn_x = 3\nn_z = 3\nk_max = 3\niters = 5\n");
    CHECK(run_cli("simulate --config " + cfg + " --seed 3 --out " + path("cli.btf")) == kExitOk);
    CHECK(run_cli("fista --config " + cfg + " --in " + path("cli.btf") + " --out " + path("cli_rec.btf")) == kExitOk);
    CHECK(run_cli("render --in " + path("cli_rec.btf") + " --out " + path("cli.pgm")) == kExitOk);
    CHECK(fs::exists(path("cli.pgm")));

    const std::string partial = write_text("partial.cfg", "n_c = 3\n");
    CHECK(run_cli("simulate --config " + partial + " --out " + path("p.btf")) == kExitValidation);
    const std::string unknown = write_text("unknown.cfg", "n_c = 3\nn_x = 3\nn_z = 3\nwhat = 1\n");
    CHECK(run_cli("simulate --config " + unknown + " --out " + path("p.btf")) == kExitValidation);
    CHECK(run_cli("simulate --config " + path("nope.cfg") + " --out " + path("p.btf")) == kExitIo);
    CHECK(run_cli("fista --config " + cfg + " --in " + path("nope.btf") + " --out " + path("p.btf")) == kExitIo);
    CHECK(run_cli("frobnicate") == kExitValidation);
    CHECK(run_cli("simulate") == kExitValidation);
    const std::string mismatch = write_text("mismatch.cfg", "n_c = 4\nn_x = 3\nn_z = 3\n");
    CHECK(run_cli("fista --config " + mismatch + " --in " + path("cli.btf") + " --out " + path("p.btf")) ==
          kExitValidation);
}
