#include "bcfmc/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "bcfmc/error.hpp"
#include "bcfmc/solver.hpp"

namespace bcfmc {

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
    if (dynamic_cast<const IoError*>(&e)) return kExitIo;
    if (dynamic_cast<const std::invalid_argument*>(&e) || dynamic_cast<const BudgetError*>(&e))
        return kExitValidation;
    return kExitIo;
}

const std::vector<std::string>& required_keys(const std::string& command) {
    static const std::map<std::string, std::vector<std::string>> table{
        {"simulate", {"n_c", "n_x", "n_z"}},
        {"build-kernels", {"n_c", "n_x", "n_z"}},
        {"fista", {"n_c", "n_x", "n_z"}},
        {"lista-train", {"n_c", "n_x", "n_z"}},
        {"lista-infer", {}},
        {"bench", {"bench_sizes"}},
        {"render", {}},
    };
    const auto it = table.find(command);
    if (it == table.end()) throw ConfigError("unknown subcommand '" + command + "'");
    return it->second;
}

void check_required(const std::string& command, const std::vector<std::string>& present) {
    for (const auto& key : required_keys(command)) {
        if (std::find(present.begin(), present.end(), key) == present.end())
            throw ConfigError("subcommand '" + command + "' requires config key '" + key + "'");
    }
}

namespace {

std::vector<double> split_u64(std::uint64_t v) {
    return {static_cast<double>(v >> 32), static_cast<double>(v & 0xFFFFFFFFull)};
}

std::uint64_t join_u64(const TensorRecord& r) {
    const auto v = r.as_f64();
    BCFMC_REQUIRE(v.size() == 2, IoError, "malformed record '" + r.name + "'");
    return (static_cast<std::uint64_t>(v[0]) << 32) | static_cast<std::uint64_t>(v[1]);
}

std::string hex(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

DType dtype_of(const RunConfig& cfg) {
    return cfg.precision == Precision::f64 ? DType::f64 : DType::f32;
}

void write_config_sidecar(const std::string& out, const RunConfig& cfg) {
    std::ofstream os(out + ".cfg");
    if (!os) throw IoError("cannot write '" + out + ".cfg'");
    os << "# config_hash = " << hex(config_hash(cfg)) << "\n# seed = " << cfg.seed << "\n"
       << print_config(cfg);
}

std::ofstream open_csv(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write '" + path + "'");
    os.precision(17);
    return os;
}

KernelBank bank_for(const RunConfig& cfg) {
    return build_kernel_bank(cfg.acquisition(), cfg.roi());
}

void check_geometry(const ConvGeometry& expected, const ConvGeometry& got) {
    if (!(expected == got)) {
        throw ShapeError("data geometry (n_c, n_x, n_z, n_t) = (" + std::to_string(got.n_c) + ", " +
                         std::to_string(got.n_x) + ", " + std::to_string(got.n_z) + ", " +
                         std::to_string(got.n_t) + ") does not match the configured model (" +
                         std::to_string(expected.n_c) + ", " + std::to_string(expected.n_x) + ", " +
                         std::to_string(expected.n_z) + ", " + std::to_string(expected.n_t) + ")");
    }
}

double solve_lambda(const RunConfig& cfg, const KernelBank& bank, const SliceSet& y) {
    if (cfg.lambda) return *cfg.lambda;
    return cfg.lambda_frac * lambda_max(bank, y, cfg.threads);
}

LipschitzOptions power_options(const RunConfig& cfg) {
    return LipschitzOptions{cfg.lipschitz_iters, cfg.lipschitz_tol, cfg.seed, cfg.threads};
}

double step_constant(const RunConfig& cfg, const KernelBank& bank) {
    if (cfg.lipschitz) return *cfg.lipschitz;
    const auto est = lipschitz_estimate(bank, slice_weights(bank.n_c()), power_options(cfg));
    if (est.zero_operator) throw NumericalError("forward operator is zero");
    return kLipschitzSafety * est.value;
}

void write_reconstruction(const RunConfig& cfg, const std::string& out, const Eigen::VectorXd& x,
                          const RoiGrid& roi, const ConvGeometry& g) {
    TensorFile file;
    file.add_matrix("reconstruction", unvectorize(x, roi), dtype_of(cfg));
    add_geometry(file, g);
    add_provenance(file, cfg);
    file.write(out);
}

}  // namespace

void add_provenance(TensorFile& file, const RunConfig& cfg) {
    file.add_scalars("meta/seed", split_u64(cfg.seed));
    file.add_scalars("meta/config_hash", split_u64(config_hash(cfg)));
}

void add_geometry(TensorFile& file, const ConvGeometry& g) {
    file.add_scalars("meta/geometry", {double(g.n_c), double(g.n_x), double(g.n_z), double(g.n_t)});
}

ConvGeometry read_geometry(const TensorFile& file) {
    const auto v = file.get("meta/geometry").as_f64();
    BCFMC_REQUIRE(v.size() == 4, IoError, "malformed geometry record");
    return ConvGeometry{int(v[0]), int(v[1]), int(v[2]), int(v[3])};
}

void add_slices(TensorFile& file, const SliceSet& s, DType dtype) {
    for (int i_s = 0; i_s < s.n_c(); ++i_s)
        file.add_matrix("slices/" + std::to_string(i_s), s.slices[i_s], dtype);
}

void add_volume(TensorFile& file, const FmcVolume& v, DType dtype) {
    TensorRecord rec{"volume",
                     {std::uint64_t(v.n_t), std::uint64_t(v.n_r), std::uint64_t(v.n_tx)},
                     {}};
    if (dtype == DType::f64)
        rec.data = std::vector<double>(v.data.begin(), v.data.end());
    else
        rec.data = std::vector<float>(v.data.begin(), v.data.end());
    file.add(std::move(rec));
}

SliceSet read_measurements(const TensorFile& file) {
    if (file.find("slices/0")) {
        SliceSet s;
        for (int i_s = 0;; ++i_s) {
            const TensorRecord* r = file.find("slices/" + std::to_string(i_s));
            if (!r) break;
            BCFMC_REQUIRE(r->rank() == 2, ShapeError, "slice record is not 2-D");
            s.slices.push_back(r->as_matrix());
        }
        for (int i_s = 0; i_s < s.n_c(); ++i_s) {
            BCFMC_REQUIRE(s.slices[i_s].rows() == s.n_t() && s.slices[i_s].cols() == s.n_c() - i_s,
                          ShapeError, "slice records are inconsistent");
        }
        return s;
    }
    const TensorRecord* r = file.find("volume");
    if (!r) throw IoError("input holds neither slices nor a volume");
    BCFMC_REQUIRE(r->rank() == 3, ShapeError, "volume record is not 3-D");
    FmcVolume v{int(r->dims[0]), int(r->dims[1]), int(r->dims[2]), {}};
    const auto data = r->as_f64();
    v.data = Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
    return extract_slices(v);
}

TensorFile net_to_tensors(const NetParams& net) {
    TensorFile f;
    const auto& a = net.forward_bank.acq;
    const auto& r = net.forward_bank.roi;
    const auto& m = net.trainable;
    f.add_scalars("net/version", {1.0});
    add_geometry(f, net.forward_bank.geom);
    f.add_scalars("net/acquisition",
                  {double(a.n_c), a.d_c, a.f_c, a.alpha, a.f_s, a.c0, a.noise_std, a.envelope_eps});
    f.add_scalars("net/roi", {double(r.n_x), double(r.n_z), r.d_x, r.d_z, r.d_s});
    f.add_scalars("net/trainable", {double(m.theta), double(m.step), double(m.g_kernels),
                                    double(m.agg_w), double(m.forward)});
    f.add_scalars("net/depth", {double(net.depth())});
    for (int s = 0; s < net.forward_bank.n_c(); ++s)
        f.add_matrix("forward/" + std::to_string(s), net.forward_bank.kernels[s]);
    for (int k = 0; k < net.depth(); ++k) {
        const auto& layer = net.layers[k];
        const std::string p = "layer" + std::to_string(k) + "/";
        f.add_scalars(p + "theta", {layer.theta});
        f.add_scalars(p + "step", {layer.step});
        f.add_vector(p + "agg_w", layer.agg_w);
        for (std::size_t s = 0; s < layer.g_kernels.size(); ++s)
            f.add_matrix(p + "g/" + std::to_string(s), layer.g_kernels[s]);
    }
    return f;
}

NetParams net_from_tensors(const TensorFile& f) {
    const auto version = f.get("net/version").as_f64();
    if (version.size() != 1 || version[0] != 1.0)
        throw ConfigError("unsupported network version");
    const auto a = f.get("net/acquisition").as_f64();
    const auto r = f.get("net/roi").as_f64();
    const auto m = f.get("net/trainable").as_f64();
    BCFMC_REQUIRE(a.size() == 8 && r.size() == 5 && m.size() == 5, ShapeError,
                  "malformed network header");

    NetParams net;
    net.forward_bank.acq = AcquisitionConfig{int(a[0]), a[1], a[2], a[3], a[4], a[5], a[6], a[7]};
    net.forward_bank.roi = RoiGrid{int(r[0]), int(r[1]), r[2], r[3], r[4]};
    net.forward_bank.geom = read_geometry(f);
    net.trainable = TrainableMask{m[0] != 0, m[1] != 0, m[2] != 0, m[3] != 0, m[4] != 0};
    const ConvGeometry& g = net.forward_bank.geom;
    BCFMC_REQUIRE(g.n_c == net.forward_bank.acq.n_c && g.n_x == net.forward_bank.roi.n_x &&
                      g.n_z == net.forward_bank.roi.n_z,
                  ShapeError, "network geometry disagrees with its acquisition header");

    auto kernel = [&](const std::string& name, int i_s) {
        const Eigen::MatrixXd k = f.get(name).as_matrix();
        BCFMC_REQUIRE(k.rows() == g.n_t && k.cols() == g.kernel_length(i_s), ShapeError,
                      "record '" + name + "' has the wrong shape");
        return RowMatrix<double>(k);
    };
    for (int s = 0; s < g.n_c; ++s) net.forward_bank.kernels.push_back(kernel("forward/" + std::to_string(s), s));

    const int depth = int(f.get("net/depth").as_f64().at(0));
    for (int k = 0; k < depth; ++k) {
        const std::string p = "layer" + std::to_string(k) + "/";
        LayerParams layer;
        layer.theta = f.get(p + "theta").as_f64().at(0);
        layer.step = f.get(p + "step").as_f64().at(0);
        layer.agg_w = f.get(p + "agg_w").as_matrix();
        for (int s = 0; s < g.n_c; ++s) layer.g_kernels.push_back(kernel(p + "g/" + std::to_string(s), s));
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

ScattererList read_scatterers_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open scatterer file '" + path + "'");
    ScattererList list;
    std::string line;
    bool header = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.find_first_of("0123456789") == std::string::npos || line[0] == 'i') continue;
        }
        std::stringstream ss(line);
        std::string f0, f1, f2;
        if (!std::getline(ss, f0, ',') || !std::getline(ss, f1, ',') || !std::getline(ss, f2, ','))
            throw ConfigError("malformed scatterer line: '" + line + "'");
        try {
            list.push_back({std::stoi(f0), std::stoi(f1), std::stod(f2)});
        } catch (const std::exception&) {
            throw ConfigError("malformed scatterer line: '" + line + "'");
        }
    }
    return list;
}

void write_scatterers_csv(const std::string& path, const ScattererList& list) {
    auto os = open_csv(path);
    os << "i_x,i_z,a\n";
    for (const auto& s : list) os << s.i_x << ',' << s.i_z << ',' << s.a << '\n';
}

std::vector<std::uint8_t> render_gray(const Eigen::MatrixXd& map) {
    const double peak = map.cwiseAbs().maxCoeff();
    std::vector<std::uint8_t> pixels;
    pixels.reserve(map.size());
    for (Eigen::Index z = 0; z < map.rows(); ++z) {
        for (Eigen::Index x = 0; x < map.cols(); ++x) {
            const double v = peak > 0 ? std::abs(map(z, x)) / peak : 0.0;
            pixels.push_back(static_cast<std::uint8_t>(std::lround(255.0 * v)));
        }
    }
    return pixels;
}

void write_pgm(const std::string& path, const Eigen::MatrixXd& map, const std::string& comment) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    os << "P5\n";
    if (!comment.empty()) os << "# " << comment << "\n";
    os << map.cols() << ' ' << map.rows() << "\n255\n";
    const auto px = render_gray(map);
    os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!os) throw IoError("failed writing '" + path + "'");
}

std::vector<BenchRow> run_bench(const RunConfig& cfg) {
    BCFMC_REQUIRE(cfg.bench_reps >= 1, ConfigError, "bench_reps must be >= 1");
    using clock = std::chrono::steady_clock;
    std::vector<BenchRow> rows;
    for (int n : cfg.bench_sizes) {
        BCFMC_REQUIRE(n >= 1, ConfigError, "bench sizes must be >= 1");
        RunConfig c = cfg;
        c.n_c = c.n_x = c.n_z = n;
        c.d_x.reset();
        c.d_z.reset();
        c.d_s.reset();
        const AcquisitionConfig acq = c.acquisition();
        const RoiGrid roi = c.roi();

        BenchRow row;
        row.n_c = row.n_x = row.n_z = n;
        row.n_t = required_samples(acq, roi);
        row.dense_bytes = storage_bytes(ModelKind::dense, acq, roi, 4);
        row.conv_bytes = storage_bytes(ModelKind::conv, acq, roi, 4);
        // The timed path materializes the bank and one network copy in doubles.
        const std::uint64_t need = 2 * storage_bytes(ModelKind::conv, acq, roi, sizeof(double));
        if (need <= cfg.memory_budget) {
            const KernelBank bank = build_kernel_bank(acq, roi);
            TrainConfig tc = c.train_config();
            // Small benchmark grids may hold fewer pixels than the configured count.
            tc.k_max = std::min(tc.k_max, roi.pixel_count());
            tc.k_min = std::min(tc.k_min, tc.k_max);
            std::mt19937_64 rng(cfg.seed);
            const Sample sample = make_sample(rng, bank, tc);
            const double l = step_constant(c, bank);
            const double lambda = solve_lambda(c, bank, sample.y);
            const LassoProblem prob = make_problem(bank, sample.y, lambda);
            const NetParams net = init_from_model(bank, lambda, l, cfg.layers);

            FistaOptions fo;
            fo.n_iter = cfg.layers;
            fo.lipschitz = l;
            fo.threads = cfg.threads;
            const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(bank.geom.map_length());

            auto time = [&](auto&& fn, double& mx, double& avg, double& mn) {
                fn();  // warm-up, not recorded
                mx = 0.0;
                mn = std::numeric_limits<double>::infinity();
                double total = 0.0;
                for (int r = 0; r < cfg.bench_reps; ++r) {
                    const auto t0 = clock::now();
                    fn();
                    const double s = std::chrono::duration<double>(clock::now() - t0).count();
                    mx = std::max(mx, s);
                    mn = std::min(mn, s);
                    total += s;
                }
                avg = total / cfg.bench_reps;
            };
            time([&] { return bc_fista(prob, x0, fo); }, row.fista_max, row.fista_avg, row.fista_min);
            time([&] { return lista_forward(net, sample.y, cfg.threads); }, row.lista_max,
                 row.lista_avg, row.lista_min);
            row.timed = true;
        }
        rows.push_back(row);
    }
    return rows;
}

void cmd_simulate(const RunConfig& cfg, const std::string& out) {
    const AcquisitionConfig acq = cfg.acquisition();
    const RoiGrid roi = cfg.roi();
    validate_pair(acq, roi);

    ScattererList list;
    if (!cfg.scatterers_file.empty()) {
        list = read_scatterers_csv(cfg.scatterers_file);
    } else {
        std::mt19937_64 rng(cfg.seed);
        list = random_map(rng, roi, cfg.train_config()).second;
    }
    const ReflectivityMap truth = make_map(roi, list);

    // Direct point-scatterer simulation of every transmit/receive pair.
    const int n_t = required_samples(acq, roi);
    auto volume = FmcVolume::zeros(n_t, acq.n_c, acq.n_c);
    for (int i_t = 0; i_t < acq.n_c; ++i_t)
        for (int i_r = 0; i_r < acq.n_c; ++i_r)
            volume.ascan(i_r, i_t) = simulate_ascan(i_t, i_r, list, acq, roi, cfg.seed);

    TensorFile file;
    add_slices(file, extract_slices(volume), dtype_of(cfg));
    if (cfg.write_volume) add_volume(file, volume, dtype_of(cfg));
    file.add_matrix("truth", truth, dtype_of(cfg));
    add_geometry(file, ConvGeometry{acq.n_c, roi.n_x, roi.n_z, n_t});
    add_provenance(file, cfg);
    file.write(out);
    write_scatterers_csv(out + ".scatterers.csv", list);
    write_config_sidecar(out, cfg);
}

void cmd_build_kernels(const RunConfig& cfg, const std::string& out) {
    const KernelBank bank = bank_for(cfg);
    TensorFile file;
    for (int s = 0; s < bank.n_c(); ++s)
        file.add_matrix("kernels/" + std::to_string(s), bank.kernels[s], dtype_of(cfg));
    add_geometry(file, bank.geom);
    add_provenance(file, cfg);
    file.write(out);
    write_config_sidecar(out, cfg);
}

void cmd_fista(const RunConfig& cfg, const std::string& data_in, const std::string& out) {
    const KernelBank bank = bank_for(cfg);
    SliceSet y = read_measurements(TensorFile::read(data_in));
    check_geometry(bank.geom, ConvGeometry{y.n_c(), bank.geom.n_x, bank.geom.n_z, y.n_t()});

    const double lambda = solve_lambda(cfg, bank, y);
    const LassoProblem prob = make_problem(bank, std::move(y), lambda);
    FistaOptions opts;
    opts.n_iter = cfg.iters;
    opts.lipschitz = step_constant(cfg, bank);
    opts.threads = cfg.threads;
    const FistaResult res = bc_fista(prob, Eigen::VectorXd::Zero(bank.geom.map_length()), opts);

    write_reconstruction(cfg, out, res.x, bank.roi, bank.geom);
    auto csv = open_csv(out + ".trace.csv");
    const std::string prov = "," + hex(config_hash(cfg)) + "," + std::to_string(cfg.seed);
    csv << "iteration,objective,lambda,lipschitz,config_hash,seed\n";
    for (std::size_t k = 0; k < res.objective.size(); ++k)
        csv << k << ',' << res.objective[k] << ',' << lambda << ',' << res.lipschitz << prov << '\n';
    write_config_sidecar(out, cfg);
}

void cmd_lista_train(const RunConfig& cfg, const std::string& out) {
    const KernelBank bank = bank_for(cfg);
    const TrainConfig tc = cfg.train_config();
    tc.validate();
    const double l0 = step_constant(cfg, bank);
    const double lambda0 = cfg.lambda ? *cfg.lambda
                                      : reference_lambda(bank, tc, cfg.lambda_frac, cfg.seed ^ 0x5eedull);
    NetParams net = init_from_model(bank, lambda0, l0, cfg.layers);
    const TrainReport report = train(net, tc, bank.acq, bank.roi);

    TensorFile file = net_to_tensors(net);
    add_provenance(file, cfg);
    file.write(out);
    auto csv = open_csv(out + ".loss.csv");
    const std::string prov = "," + hex(config_hash(cfg)) + "," + std::to_string(cfg.seed);
    csv << "epoch,loss,config_hash,seed\n";
    for (std::size_t e = 0; e < report.loss_trace.size(); ++e)
        csv << e << ',' << report.loss_trace[e] << prov << '\n';
    write_config_sidecar(out, cfg);
}

void cmd_lista_infer(const RunConfig& cfg, const std::string& net_in, const std::string& data_in,
                     const std::string& out) {
    const NetParams net = net_from_tensors(TensorFile::read(net_in));
    const SliceSet y = read_measurements(TensorFile::read(data_in));
    check_geometry(net.forward_bank.geom,
                   ConvGeometry{y.n_c(), net.forward_bank.geom.n_x, net.forward_bank.geom.n_z, y.n_t()});
    const Eigen::VectorXd x = lista_forward(net, y, cfg.threads);
    write_reconstruction(cfg, out, x, net.forward_bank.roi, net.forward_bank.geom);
    write_config_sidecar(out, cfg);
}

void cmd_bench(const RunConfig& cfg, const std::string& out_csv) {
    const auto rows = run_bench(cfg);
    auto csv = open_csv(out_csv);
    csv << "n_c,n_x,n_z,n_t,dense_bytes,conv_bytes,dense_conv_ratio,timed,"
           "fista_max_s,fista_avg_s,fista_min_s,lista_max_s,lista_avg_s,lista_min_s,"
           "lista_faster,reps,config_hash,seed\n";
    for (const auto& r : rows) {
        csv << r.n_c << ',' << r.n_x << ',' << r.n_z << ',' << r.n_t << ',' << r.dense_bytes << ','
            << r.conv_bytes << ',' << r.ratio() << ',' << (r.timed ? 1 : 0) << ',';
        if (r.timed) {
            csv << r.fista_max << ',' << r.fista_avg << ',' << r.fista_min << ',' << r.lista_max << ','
                << r.lista_avg << ',' << r.lista_min << ',' << (r.lista_avg < r.fista_avg ? 1 : 0);
        } else {
            csv << ",,,,,,";
        }
        csv << ',' << cfg.bench_reps << ',' << hex(config_hash(cfg)) << ',' << cfg.seed << '\n';
    }
}

void cmd_render(const std::string& tensor_in, const std::string& image_out) {
    const TensorFile file = TensorFile::read(tensor_in);
    const TensorRecord* rec = file.find("reconstruction");
    if (!rec) rec = file.find("truth");
    if (!rec) {
        for (const auto& r : file.records) {
            if (r.name.rfind("meta/", 0) != 0) {
                rec = &r;
                break;
            }
        }
    }
    if (!rec) throw IoError("no tensor to render in '" + tensor_in + "'");
    BCFMC_REQUIRE(rec->rank() == 2, ShapeError, "record '" + rec->name + "' is not 2-D");

    std::string comment = "source=" + rec->name;
    if (const auto* h = file.find("meta/config_hash")) comment += " config_hash=" + hex(join_u64(*h));
    if (const auto* s = file.find("meta/seed")) comment += " seed=" + std::to_string(join_u64(*s));
    write_pgm(image_out, rec->as_matrix(), comment);
}

}  // namespace bcfmc
