#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bcfmc/commands.hpp"
#include "bcfmc/config.hpp"
#include "bcfmc/error.hpp"

namespace {

struct Args {
    std::string config;
    std::string in;
    std::string out;
    std::string net;
    std::optional<std::uint64_t> seed;
};

bcfmc::RunConfig resolve_config(const std::string& command, const Args& args) {
    std::vector<std::string> present;
    bcfmc::RunConfig cfg;
    if (!args.config.empty()) cfg = bcfmc::load_config(args.config, &present);
    bcfmc::check_required(command, present);
    if (args.seed) cfg.seed = *args.seed;
    return cfg;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw bcfmc::ConfigError(std::string("missing required flag ") + flag);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Block-convolutional FMC forward model, BC-FISTA and BC-LISTA"};
    app.require_subcommand(1);
    Args args;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config, "key = value config file");
        sub->add_option("--seed", args.seed, "overrides the config seed");
    };

    auto* simulate = app.add_subcommand("simulate", "simulate FMC data for a scatterer set");
    add_common(simulate);
    simulate->add_option("--out", args.out, "output tensor file")->required();

    auto* kernels = app.add_subcommand("build-kernels", "build and store the kernel bank");
    add_common(kernels);
    kernels->add_option("--out", args.out, "output tensor file")->required();

    auto* fista = app.add_subcommand("fista", "BC-FISTA reconstruction");
    add_common(fista);
    fista->add_option("--in", args.in, "measurement tensor file")->required();
    fista->add_option("--out", args.out, "reconstruction tensor file")->required();

    auto* train = app.add_subcommand("lista-train", "train a BC-LISTA network on synthetic data");
    add_common(train);
    train->add_option("--out", args.out, "network tensor file")->required();

    auto* infer = app.add_subcommand("lista-infer", "BC-LISTA reconstruction");
    add_common(infer);
    infer->add_option("--net", args.net, "network tensor file")->required();
    infer->add_option("--in", args.in, "measurement tensor file")->required();
    infer->add_option("--out", args.out, "reconstruction tensor file")->required();

    auto* bench = app.add_subcommand("bench", "storage and timing report");
    add_common(bench);
    bench->add_option("--out", args.out, "output CSV")->required();

    auto* render = app.add_subcommand("render", "render a 2-D tensor as a PGM image");
    render->add_option("--in", args.in, "tensor file")->required();
    render->add_option("--out", args.out, "output PGM")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? bcfmc::kExitOk : bcfmc::kExitValidation;
    }

    try {
        if (*simulate) {
            bcfmc::cmd_simulate(resolve_config("simulate", args), args.out);
        } else if (*kernels) {
            bcfmc::cmd_build_kernels(resolve_config("build-kernels", args), args.out);
        } else if (*fista) {
            bcfmc::cmd_fista(resolve_config("fista", args), args.in, args.out);
        } else if (*train) {
            bcfmc::cmd_lista_train(resolve_config("lista-train", args), args.out);
        } else if (*infer) {
            bcfmc::cmd_lista_infer(resolve_config("lista-infer", args), args.net, args.in, args.out);
        } else if (*bench) {
            bcfmc::cmd_bench(resolve_config("bench", args), args.out);
        } else if (*render) {
            require(args.in, "--in");
            bcfmc::cmd_render(args.in, args.out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return bcfmc::exit_code_for(e);
    }
    return bcfmc::kExitOk;
}
