#pragma once

#include <cstdint>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "bcfmc/error.hpp"
#include "bcfmc/parallel.hpp"
#include "bcfmc/scene.hpp"

namespace bcfmc {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ColMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
// Non-deduced read-only views, so T is taken from the kernel bank argument.
template <class T>
using VecIn = std::type_identity_t<Eigen::Ref<const Vec<T>>>;
template <class T>
using ColMatrixIn = std::type_identity_t<Eigen::Ref<const ColMatrix<T>>>;

// Sizes shared by every per-slice strided convolution.
struct ConvGeometry {
    int n_c = 0;
    int n_x = 0;
    int n_z = 0;
    int n_t = 0;

    int outputs(int i_s) const { return n_c - i_s; }
    int segments(int i_s) const { return n_c - i_s + n_x - 1; }
    Eigen::Index kernel_length(int i_s) const {
        return static_cast<Eigen::Index>(segments(i_s)) * n_z;
    }
    Eigen::Index padding(int i_s) const { return static_cast<Eigen::Index>(outputs(i_s) - 1) * n_z; }
    Eigen::Index map_length() const { return static_cast<Eigen::Index>(n_x) * n_z; }
    bool operator==(const ConvGeometry&) const = default;
};

// Per-slice convolution kernels. Row n of kernels[i_s] is the flipped row n of
// the elongated matrix: segment s (length N_z) holds block delta = N_c-1-i_s-s,
// depth in natural order, so a forward output is a plain dot product with the
// zero-padded map at offset o * N_z.
template <class T>
struct BasicKernelBank {
    AcquisitionConfig acq;
    RoiGrid roi;
    ConvGeometry geom;
    std::vector<RowMatrix<T>> kernels;

    int n_c() const { return geom.n_c; }
    int n_t() const { return geom.n_t; }

    std::uint64_t coefficient_count() const {
        std::uint64_t total = 0;
        for (const auto& k : kernels) total += static_cast<std::uint64_t>(k.size());
        return total;
    }

    template <class U>
    BasicKernelBank<U> cast() const {
        BasicKernelBank<U> out{acq, roi, geom, {}};
        out.kernels.reserve(kernels.size());
        for (const auto& k : kernels) out.kernels.push_back(k.template cast<U>());
        return out;
    }
};
using KernelBank = BasicKernelBank<double>;

// The N_c unique diagonal slices of an FMC volume; slices[i_s] is N_t x (N_c - i_s),
// column i_T holding the A-scan for transmitter i_T and receiver i_T + i_s.
template <class T>
struct BasicSliceSet {
    std::vector<ColMatrix<T>> slices;

    int n_c() const { return static_cast<int>(slices.size()); }
    int n_t() const { return slices.empty() ? 0 : static_cast<int>(slices.front().rows()); }

    static BasicSliceSet zeros(int n_t, int n_c) {
        BasicSliceSet s;
        for (int i_s = 0; i_s < n_c; ++i_s) s.slices.push_back(ColMatrix<T>::Zero(n_t, n_c - i_s));
        return s;
    }
};
using SliceSet = BasicSliceSet<double>;

// N_t x N_R x N_T array, column-major (time fastest, then receiver).
template <class T>
struct BasicFmcVolume {
    int n_t = 0;
    int n_r = 0;
    int n_tx = 0;
    Vec<T> data;

    static BasicFmcVolume zeros(int n_t, int n_r, int n_tx) {
        return {n_t, n_r, n_tx, Vec<T>::Zero(static_cast<Eigen::Index>(n_t) * n_r * n_tx)};
    }
    Eigen::Index index(int n, int i_r, int i_t) const {
        return n + static_cast<Eigen::Index>(n_t) * (i_r + static_cast<Eigen::Index>(n_r) * i_t);
    }
    T& operator()(int n, int i_r, int i_t) { return data[index(n, i_r, i_t)]; }
    T operator()(int n, int i_r, int i_t) const { return data[index(n, i_r, i_t)]; }
    auto ascan(int i_r, int i_t) { return data.segment(index(0, i_r, i_t), n_t); }
    auto ascan(int i_r, int i_t) const { return data.segment(index(0, i_r, i_t), n_t); }
};
using FmcVolume = BasicFmcVolume<double>;

// Slice multiplicities under reciprocity: 1 for the diagonal, 2 otherwise.
Eigen::VectorXd slice_weights(int n_c);

KernelBank build_kernel_bank(const AcquisitionConfig& acq, const RoiGrid& roi);

// Un-flipped elongated matrix of slice i_s (every kernel row reversed).
RowMatrix<double> elongated_matrix(const KernelBank& bank, int i_s);

// Strided convolution of map x with the rows of `kernels` (stride N_z, padding
// (N_c-i_s-1) N_z on both ends). Returns the N_t x (N_c - i_s) slice.
template <class T>
ColMatrix<T> apply_slice(const RowMatrix<T>& kernels, const ConvGeometry& g, int i_s,
                         const VecIn<T>& x) {
    const int outputs = g.outputs(i_s);
    const Eigen::Index len = g.map_length();
    BCFMC_REQUIRE(x.size() == len, ShapeError, "map length does not match the kernel bank");
    BCFMC_REQUIRE(kernels.rows() == g.n_t && kernels.cols() == g.kernel_length(i_s), ShapeError,
                  "kernel matrix shape does not match slice geometry");
    ColMatrix<T> y(g.n_t, outputs);
    // The padded map always overlaps the kernel in exactly N_x N_z taps,
    // starting at kernel offset (outputs - 1 - o) N_z.
    for (int o = 0; o < outputs; ++o) {
        const Eigen::Index off = static_cast<Eigen::Index>(outputs - 1 - o) * g.n_z;
        y.col(o).noalias() = kernels.middleCols(off, len) * x;
    }
    return y;
}

// Transposed strided convolution (scatter-add): the exact adjoint of apply_slice.
template <class T>
void apply_slice_transpose_add(const RowMatrix<T>& kernels, const ConvGeometry& g, int i_s,
                               const ColMatrixIn<T>& r, T scale,
                               Eigen::Ref<Vec<T>> out) {
    const int outputs = g.outputs(i_s);
    const Eigen::Index len = g.map_length();
    BCFMC_REQUIRE(r.rows() == g.n_t && r.cols() == outputs, ShapeError,
                  "residual slice shape does not match slice geometry");
    BCFMC_REQUIRE(out.size() == len, ShapeError, "output length does not match the map");
    for (int o = 0; o < outputs; ++o) {
        const Eigen::Index off = static_cast<Eigen::Index>(outputs - 1 - o) * g.n_z;
        out.noalias() += scale * (kernels.middleCols(off, len).transpose() * r.col(o));
    }
}

template <class T>
Vec<T> apply_slice_transpose(const RowMatrix<T>& kernels, const ConvGeometry& g, int i_s,
                             const ColMatrixIn<T>& r) {
    Vec<T> out = Vec<T>::Zero(g.map_length());
    apply_slice_transpose_add<T>(kernels, g, i_s, r, T(1), out);
    return out;
}

// Gradient of <upstream, apply_slice(K, x)> with respect to K, accumulated
// into grad (same shape as the slice kernels).
template <class T>
void kernel_gradient_add(const ConvGeometry& g, int i_s, const ColMatrixIn<T>& upstream,
                         const VecIn<T>& x, T scale, RowMatrix<T>& grad) {
    const int outputs = g.outputs(i_s);
    const Eigen::Index len = g.map_length();
    for (int o = 0; o < outputs; ++o) {
        const Eigen::Index off = static_cast<Eigen::Index>(outputs - 1 - o) * g.n_z;
        grad.middleCols(off, len).noalias() += (scale * upstream.col(o)) * x.transpose();
    }
}

template <class T>
ColMatrix<T> conv_forward_slice(const BasicKernelBank<T>& bank, const VecIn<T>& x,
                                int i_s) {
    BCFMC_REQUIRE(i_s >= 0 && i_s < bank.n_c(), ContractError, "slice index out of range");
    return apply_slice<T>(bank.kernels[i_s], bank.geom, i_s, x);
}

template <class T>
BasicSliceSet<T> conv_forward(const BasicKernelBank<T>& bank, const VecIn<T>& x,
                              int threads = 1) {
    BasicSliceSet<T> out;
    out.slices.resize(bank.n_c());
    parallel_for(bank.n_c(), threads, [&](std::size_t i_s) {
        out.slices[i_s] = apply_slice<T>(bank.kernels[i_s], bank.geom, static_cast<int>(i_s), x);
    });
    return out;
}

template <class T>
void check_slices(const BasicSliceSet<T>& s, const ConvGeometry& g) {
    BCFMC_REQUIRE(s.n_c() == g.n_c, ShapeError, "slice count does not match the kernel bank");
    for (int i_s = 0; i_s < g.n_c; ++i_s) {
        BCFMC_REQUIRE(s.slices[i_s].rows() == g.n_t && s.slices[i_s].cols() == g.outputs(i_s),
                      ShapeError, "slice shape does not match the kernel bank");
    }
}

// sum_{i_s} w[i_s] B_{i_s}^T r_{i_s}. Per-slice partials are reduced in slice
// order, so the result is independent of the thread count.
template <class T>
Vec<T> conv_adjoint(const BasicKernelBank<T>& bank, const BasicSliceSet<T>& r,
                    const Eigen::Ref<const Eigen::VectorXd>& weights, int threads = 1) {
    check_slices(r, bank.geom);
    BCFMC_REQUIRE(weights.size() == bank.n_c(), ShapeError, "weight count does not match slices");
    std::vector<Vec<T>> partial(bank.n_c());
    parallel_for(bank.n_c(), threads, [&](std::size_t i_s) {
        partial[i_s] = apply_slice_transpose<T>(bank.kernels[i_s], bank.geom,
                                                static_cast<int>(i_s), r.slices[i_s]);
    });
    Vec<T> out = Vec<T>::Zero(bank.geom.map_length());
    for (int i_s = 0; i_s < bank.n_c(); ++i_s) out += static_cast<T>(weights[i_s]) * partial[i_s];
    return out;
}

// Places slice i_s at (i_R, i_T) = (i_T + i_s, i_T) and mirrors it to (i_T, i_T + i_s).
template <class T>
BasicFmcVolume<T> assemble_volume(const BasicSliceSet<T>& s) {
    const int n_c = s.n_c();
    auto v = BasicFmcVolume<T>::zeros(s.n_t(), n_c, n_c);
    for (int i_s = 0; i_s < n_c; ++i_s) {
        BCFMC_REQUIRE(s.slices[i_s].rows() == s.n_t() && s.slices[i_s].cols() == n_c - i_s,
                      ShapeError, "malformed slice set");
        for (int i_t = 0; i_t + i_s < n_c; ++i_t) {
            v.ascan(i_t + i_s, i_t) = s.slices[i_s].col(i_t);
            v.ascan(i_t, i_t + i_s) = s.slices[i_s].col(i_t);
        }
    }
    return v;
}

// Folds a volume onto its unique slices, averaging each reciprocal pair.
template <class T>
BasicSliceSet<T> extract_slices(const BasicFmcVolume<T>& v) {
    BCFMC_REQUIRE(v.n_r == v.n_tx, ShapeError, "volume must have N_R == N_T");
    const int n_c = v.n_r;
    auto s = BasicSliceSet<T>::zeros(v.n_t, n_c);
    for (int i_s = 0; i_s < n_c; ++i_s) {
        for (int i_t = 0; i_t + i_s < n_c; ++i_t) {
            if (i_s == 0)
                s.slices[0].col(i_t) = v.ascan(i_t, i_t);
            else
                s.slices[i_s].col(i_t) = (v.ascan(i_t + i_s, i_t) + v.ascan(i_t, i_t + i_s)) / T(2);
        }
    }
    return s;
}

// Data-only constant of the fold: sum over off-diagonal pairs of
// 1/2 ||v_upper - v_lower||^2.
double fold_constant(const FmcVolume& v);

// sum_{i_s} w[i_s] <a_{i_s}, b_{i_s}>
double weighted_dot(const SliceSet& a, const SliceSet& b, const Eigen::Ref<const Eigen::VectorXd>& w);

SliceSet operator-(const SliceSet& a, const SliceSet& b);

enum class ModelKind { dense, conv };

std::uint64_t conv_coefficient_count(int n_c, int n_x, int n_z, int n_t);
std::uint64_t dense_coefficient_count(int n_c, int n_x, int n_z, int n_t);

// Storage of either model at the given parameter width; no allocation.
std::uint64_t storage_bytes(ModelKind kind, const AcquisitionConfig& acq, const RoiGrid& roi,
                            unsigned bytes_per_param = 4);

}  // namespace bcfmc
