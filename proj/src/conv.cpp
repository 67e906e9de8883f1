// Convolution family: im2col/col2im lowering onto Eigen GEMM.

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Core>

#include "tcseg/errors.hpp"
#include "tcseg/ops.hpp"
#include "tcseg/ops_detail.hpp"

namespace tcseg {

using detail::TensorImpl;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

// Geometry of a forward convolution from `in` to `out` extents.
struct Geometry {
    std::array<std::size_t, 3> in{}, out{}, k{}, pad{};
    std::size_t stride = 1;

    std::size_t in_numel() const { return in[0] * in[1] * in[2]; }
    std::size_t out_numel() const { return out[0] * out[1] * out[2]; }
    std::size_t k_numel() const { return k[0] * k[1] * k[2]; }
    bool is_pointwise() const { return k_numel() == 1 && stride == 1; }
};

void check_rank5(const Tensor& t, const char* op, const char* what) {
    if (t.rank() != 5)
        throw ArgumentError(std::string(op) + ": " + what + " must be rank 5, got " + shape_str(t.shape()));
}

// Output positions o in [lo, hi) whose input index o * stride + k - pad lies inside [0, in).
struct ValidRange {
    std::size_t lo, hi;
};

ValidRange valid_range(std::size_t k, std::size_t pad, std::size_t stride, std::size_t in, std::size_t out) {
    const long first = static_cast<long>(pad) - static_cast<long>(k);
    const long s = static_cast<long>(stride);
    const long lo = first <= 0 ? 0 : (first + s - 1) / s;
    const long last = static_cast<long>(in) - 1 + first;
    const long hi = last < 0 ? 0 : last / s + 1;
    const auto clamp = [out](long v) { return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(out))); };
    const std::size_t a = clamp(lo), b = clamp(hi);
    return {a, std::max(a, b)};
}

// col[(c, kz, ky, kx), (oz, oy, ox)] = x[c, iz, iy, ix] (zero outside).
void im2col(const double* x, std::size_t channels, const Geometry& g, double* col) {
    const std::size_t P = g.out_numel();
    const std::size_t plane = g.in[1] * g.in[2];
    const std::size_t s = g.stride;
    std::size_t row = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        const double* src = x + c * g.in_numel();
        for (std::size_t kz = 0; kz < g.k[0]; ++kz) {
            const ValidRange rz = valid_range(kz, g.pad[0], s, g.in[0], g.out[0]);
            for (std::size_t ky = 0; ky < g.k[1]; ++ky) {
                const ValidRange ry = valid_range(ky, g.pad[1], s, g.in[1], g.out[1]);
                for (std::size_t kx = 0; kx < g.k[2]; ++kx, ++row) {
                    const ValidRange rx = valid_range(kx, g.pad[2], s, g.in[2], g.out[2]);
                    double* dst = col + row * P;
                    std::fill_n(dst, P, 0.0);
                    for (std::size_t oz = rz.lo; oz < rz.hi; ++oz) {
                        const std::size_t iz = oz * s + kz - g.pad[0];
                        for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
                            const std::size_t iy = oy * s + ky - g.pad[1];
                            const double* line = src + iz * plane + iy * g.in[2] + kx - g.pad[2];
                            double* out = dst + (oz * g.out[1] + oy) * g.out[2];
                            if (s == 1) {
                                std::copy(line + rx.lo, line + rx.hi, out + rx.lo);
                            } else {
                                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) out[ox] = line[ox * s];
                            }
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: x[c, iz, iy, ix] += col[...].
void col2im(const double* col, std::size_t channels, const Geometry& g, double* x) {
    const std::size_t P = g.out_numel();
    const std::size_t plane = g.in[1] * g.in[2];
    const std::size_t s = g.stride;
    std::size_t row = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        double* dst_base = x + c * g.in_numel();
        for (std::size_t kz = 0; kz < g.k[0]; ++kz) {
            const ValidRange rz = valid_range(kz, g.pad[0], s, g.in[0], g.out[0]);
            for (std::size_t ky = 0; ky < g.k[1]; ++ky) {
                const ValidRange ry = valid_range(ky, g.pad[1], s, g.in[1], g.out[1]);
                for (std::size_t kx = 0; kx < g.k[2]; ++kx, ++row) {
                    const ValidRange rx = valid_range(kx, g.pad[2], s, g.in[2], g.out[2]);
                    const double* src = col + row * P;
                    for (std::size_t oz = rz.lo; oz < rz.hi; ++oz) {
                        const std::size_t iz = oz * s + kz - g.pad[0];
                        for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
                            const std::size_t iy = oy * s + ky - g.pad[1];
                            double* line = dst_base + iz * plane + iy * g.in[2] + kx - g.pad[2];
                            const double* in = src + (oz * g.out[1] + oy) * g.out[2];
                            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) line[ox * s] += in[ox];
                        }
                    }
                }
            }
        }
    }
}

void add_bias(double* out, const double* bias, std::size_t channels, std::size_t per_channel) {
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < per_channel; ++i) out[c * per_channel + i] += bias[c];
}

void accumulate_bias_grad(const double* grad_out, double* grad_bias, std::size_t channels,
                          std::size_t per_channel) {
    for (std::size_t c = 0; c < channels; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < per_channel; ++i) s += grad_out[c * per_channel + i];
        grad_bias[c] += s;
    }
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels))
        throw ArgumentError(std::string(op) + ": bias shape " + shape_str(bias.shape()) +
                            " does not match " + std::to_string(channels) + " output channels");
}

} // namespace

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              Padding padding) {
    check_rank5(input, "conv3d", "input");
    check_rank5(weight, "conv3d", "kernel");
    if (stride < 1) throw ArgumentError("conv3d: stride must be >= 1");
    const Shape& xs = input.shape();
    const Shape& ws = weight.shape();
    if (ws[1] != xs[1])
        throw ArgumentError("conv3d: kernel " + shape_str(ws) + " expects " + std::to_string(ws[1]) +
                            " input channels, input has " + std::to_string(xs[1]));
    const std::size_t n = xs[0], ci = xs[1], co = ws[0];
    check_bias(bias, co, "conv3d");

    Geometry g;
    g.stride = stride;
    for (int a = 0; a < 3; ++a) {
        g.in[a] = xs[2 + a];
        g.k[a] = ws[2 + a];
        if (padding == Padding::same) {
            if (g.k[a] % 2 == 0) throw ArgumentError("conv3d: same padding needs odd kernel extents");
            g.pad[a] = (g.k[a] - 1) / 2;
        } else if (g.k[a] > g.in[a]) {
            throw ArgumentError("conv3d: kernel larger than input with valid padding");
        }
        g.out[a] = (g.in[a] + 2 * g.pad[a] - g.k[a]) / stride + 1;
    }
    const std::size_t P = g.out_numel(), CK = ci * g.k_numel();
    Shape out_shape{n, co, g.out[0], g.out[1], g.out[2]};
    std::vector<double> out(n * co * P);
    std::vector<double> col(g.is_pointwise() ? 0 : CK * P);
    MapConstMat W(weight.values().data(), co, CK);
    auto xv = input.values();
    for (std::size_t b = 0; b < n; ++b) {
        const double* xb = xv.data() + b * ci * g.in_numel();
        const double* colp = xb;
        if (!g.is_pointwise()) {
            im2col(xb, ci, g, col.data());
            colp = col.data();
        }
        MapMat Y(out.data() + b * co * P, co, P);
        Y.noalias() = W * MapConstMat(colp, CK, P);
        if (bias.defined()) add_bias(out.data() + b * co * P, bias.values().data(), co, P);
    }

    return make_result(std::move(out_shape), std::move(out), {input, weight, bias},
                       [input, weight, bias, g, n, ci, co, P, CK](const TensorImpl& o) {
                           auto gx = detail::grad_of(input);
                           auto gw = detail::grad_of(weight);
                           auto gb = detail::grad_of(bias);
                           auto xv = input.values();
                           MapConstMat W(weight.values().data(), co, CK);
                           std::vector<double> col(CK * P);
                           for (std::size_t b = 0; b < n; ++b) {
                               MapConstMat GY(o.grad.data() + b * co * P, co, P);
                               const double* xb = xv.data() + b * ci * g.in_numel();
                               if (!gw.empty()) {
                                   const double* colp = xb;
                                   if (!g.is_pointwise()) {
                                       im2col(xb, ci, g, col.data());
                                       colp = col.data();
                                   }
                                   MapMat GW(gw.data(), co, CK);
                                   GW.noalias() += GY * MapConstMat(colp, CK, P).transpose();
                               }
                               if (!gb.empty()) accumulate_bias_grad(o.grad.data() + b * co * P, gb.data(), co, P);
                               if (!gx.empty()) {
                                   double* gxb = gx.data() + b * ci * g.in_numel();
                                   if (g.is_pointwise()) {
                                       MapMat GX(gxb, ci, P);
                                       GX.noalias() += W.transpose() * GY;
                                   } else {
                                       MapMat C(col.data(), CK, P);
                                       C.noalias() = W.transpose() * GY;
                                       col2im(col.data(), ci, g, gxb);
                                   }
                               }
                           }
                       });
}

Tensor conv3d(const Tensor& input, const Tensor& weight, std::size_t stride, Padding padding) {
    return conv3d(input, weight, Tensor(), stride, padding);
}

Tensor transposed_conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                         std::size_t stride) {
    check_rank5(input, "transposed_conv3d", "input");
    check_rank5(weight, "transposed_conv3d", "kernel");
    if (stride < 1) throw ArgumentError("transposed_conv3d: stride must be >= 1");
    const Shape& xs = input.shape();
    const Shape& ws = weight.shape();
    if (ws[0] != xs[1])
        throw ArgumentError("transposed_conv3d: kernel " + shape_str(ws) + " expects " +
                            std::to_string(ws[0]) + " input channels, input has " + std::to_string(xs[1]));
    const std::size_t n = xs[0], ci = xs[1], co = ws[1];
    check_bias(bias, co, "transposed_conv3d");

    // Lowered as the adjoint of a convolution from the output grid to the input grid.
    Geometry g;
    g.stride = stride;
    for (int a = 0; a < 3; ++a) {
        g.out[a] = xs[2 + a];
        g.k[a] = ws[2 + a];
        g.in[a] = (g.out[a] - 1) * stride + g.k[a];
    }
    const std::size_t Pin = g.out_numel(), Pout = g.in_numel(), CK = co * g.k_numel();
    Shape out_shape{n, co, g.in[0], g.in[1], g.in[2]};
    std::vector<double> out(n * co * Pout, 0.0);
    std::vector<double> col(CK * Pin);
    MapConstMat W(weight.values().data(), ci, CK);
    auto xv = input.values();
    for (std::size_t b = 0; b < n; ++b) {
        MapMat C(col.data(), CK, Pin);
        C.noalias() = W.transpose() * MapConstMat(xv.data() + b * ci * Pin, ci, Pin);
        col2im(col.data(), co, g, out.data() + b * co * Pout);
        if (bias.defined()) add_bias(out.data() + b * co * Pout, bias.values().data(), co, Pout);
    }

    return make_result(std::move(out_shape), std::move(out), {input, weight, bias},
                       [input, weight, bias, g, n, ci, co, Pin, Pout, CK](const TensorImpl& o) {
                           auto gx = detail::grad_of(input);
                           auto gw = detail::grad_of(weight);
                           auto gb = detail::grad_of(bias);
                           auto xv = input.values();
                           MapConstMat W(weight.values().data(), ci, CK);
                           std::vector<double> col(CK * Pin);
                           for (std::size_t b = 0; b < n; ++b) {
                               const double* gyb = o.grad.data() + b * co * Pout;
                               if (!gb.empty()) accumulate_bias_grad(gyb, gb.data(), co, Pout);
                               if (gx.empty() && gw.empty()) continue;
                               im2col(gyb, co, g, col.data());
                               MapConstMat C(col.data(), CK, Pin);
                               if (!gx.empty()) {
                                   MapMat GX(gx.data() + b * ci * Pin, ci, Pin);
                                   GX.noalias() += W * C;
                               }
                               if (!gw.empty()) {
                                   MapMat GW(gw.data(), ci, CK);
                                   GW.noalias() += MapConstMat(xv.data() + b * ci * Pin, ci, Pin) * C.transpose();
                               }
                           }
                       });
}

Tensor transposed_conv3d(const Tensor& input, const Tensor& weight, std::size_t stride) {
    return transposed_conv3d(input, weight, Tensor(), stride);
}

namespace {

struct AxisInterp {
    std::vector<std::size_t> lo, hi;
    std::vector<double> w_hi;
};

AxisInterp axis_interp(std::size_t in, std::size_t factor) {
    AxisInterp a;
    const std::size_t out = in * factor;
    a.lo.resize(out);
    a.hi.resize(out);
    a.w_hi.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
        if (src < 0.0) src = 0.0;
        std::size_t lo = static_cast<std::size_t>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        a.lo[o] = lo;
        a.hi[o] = std::min(lo + 1, in - 1);
        a.w_hi[o] = src - static_cast<double>(lo);
    }
    return a;
}

} // namespace

Tensor trilinear_upsample(const Tensor& input, std::size_t factor) {
    if (factor < 2) throw ArgumentError("trilinear_upsample: factor must be >= 2");
    if (input.rank() < 3) throw ArgumentError("trilinear_upsample: need at least three axes");
    const Shape& xs = input.shape();
    const std::size_t r = xs.size();
    const std::size_t D = xs[r - 3], H = xs[r - 2], Wd = xs[r - 1];
    const std::size_t planes = input.numel() / (D * H * Wd);
    Shape out_shape = xs;
    out_shape[r - 3] *= factor;
    out_shape[r - 2] *= factor;
    out_shape[r - 1] *= factor;
    const AxisInterp az = axis_interp(D, factor), ay = axis_interp(H, factor), ax = axis_interp(Wd, factor);
    const std::size_t oD = D * factor, oH = H * factor, oW = Wd * factor;
    const std::size_t in_vol = D * H * Wd, out_vol = oD * oH * oW;

    auto xv = input.values();
    std::vector<double> out(planes * out_vol);
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = xv.data() + p * in_vol;
        double* dst = out.data() + p * out_vol;
        for (std::size_t z = 0; z < oD; ++z) {
            const double wz1 = az.w_hi[z], wz0 = 1.0 - wz1;
            for (std::size_t y = 0; y < oH; ++y) {
                const double wy1 = ay.w_hi[y], wy0 = 1.0 - wy1;
                const double* r00 = src + (az.lo[z] * H + ay.lo[y]) * Wd;
                const double* r01 = src + (az.lo[z] * H + ay.hi[y]) * Wd;
                const double* r10 = src + (az.hi[z] * H + ay.lo[y]) * Wd;
                const double* r11 = src + (az.hi[z] * H + ay.hi[y]) * Wd;
                for (std::size_t x = 0; x < oW; ++x) {
                    const std::size_t x0 = ax.lo[x], x1 = ax.hi[x];
                    const double wx1 = ax.w_hi[x], wx0 = 1.0 - wx1;
                    const double v0 = wy0 * (wx0 * r00[x0] + wx1 * r00[x1]) + wy1 * (wx0 * r01[x0] + wx1 * r01[x1]);
                    const double v1 = wy0 * (wx0 * r10[x0] + wx1 * r10[x1]) + wy1 * (wx0 * r11[x0] + wx1 * r11[x1]);
                    dst[(z * oH + y) * oW + x] = wz0 * v0 + wz1 * v1;
                }
            }
        }
    }
    return make_result(std::move(out_shape), std::move(out), {input},
                       [input, az, ay, ax, planes, H, Wd, in_vol, oD, oH, oW, out_vol](const TensorImpl& o) {
                           // Separable adjoint: collapse x, then y, then z.
                           auto gx = detail::grad_of(input);
                           std::vector<double> gxw(oD * oH * Wd), gyw(oD * H * Wd);
                           for (std::size_t p = 0; p < planes; ++p) {
                               const double* g = o.grad.data() + p * out_vol;
                               std::fill(gxw.begin(), gxw.end(), 0.0);
                               for (std::size_t row = 0; row < oD * oH; ++row) {
                                   const double* gr = g + row * oW;
                                   double* dr = gxw.data() + row * Wd;
                                   for (std::size_t x = 0; x < oW; ++x) {
                                       const double w1 = ax.w_hi[x];
                                       dr[ax.lo[x]] += gr[x] * (1.0 - w1);
                                       dr[ax.hi[x]] += gr[x] * w1;
                                   }
                               }
                               std::fill(gyw.begin(), gyw.end(), 0.0);
                               for (std::size_t z = 0; z < oD; ++z)
                                   for (std::size_t y = 0; y < oH; ++y) {
                                       const double w1 = ay.w_hi[y], w0 = 1.0 - w1;
                                       const double* gr = gxw.data() + (z * oH + y) * Wd;
                                       double* d0 = gyw.data() + (z * H + ay.lo[y]) * Wd;
                                       double* d1 = gyw.data() + (z * H + ay.hi[y]) * Wd;
                                       for (std::size_t x = 0; x < Wd; ++x) {
                                           d0[x] += gr[x] * w0;
                                           d1[x] += gr[x] * w1;
                                       }
                                   }
                               double* dst = gx.data() + p * in_vol;
                               const std::size_t plane = H * Wd;
                               for (std::size_t z = 0; z < oD; ++z) {
                                   const double w1 = az.w_hi[z], w0 = 1.0 - w1;
                                   const double* gr = gyw.data() + z * plane;
                                   double* d0 = dst + az.lo[z] * plane;
                                   double* d1 = dst + az.hi[z] * plane;
                                   for (std::size_t i = 0; i < plane; ++i) {
                                       d0[i] += gr[i] * w0;
                                       d1[i] += gr[i] * w1;
                                   }
                               }
                           }
                       });
}

Tensor group_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, std::size_t groups,
                  double eps) {
    if (input.rank() < 3) throw ArgumentError("group_norm: expected [N, C, ...]");
    const std::size_t n = input.dim(0), c = input.dim(1);
    if (groups == 0 || c % groups != 0)
        throw ArgumentError("group_norm: channels " + std::to_string(c) + " not divisible into " +
                            std::to_string(groups) + " groups");
    if (gamma.numel() != c || beta.numel() != c)
        throw ArgumentError("group_norm: affine parameters must have one entry per channel");
    const std::size_t s = input.numel() / (n * c);
    const std::size_t cpg = c / groups;
    const std::size_t m = cpg * s;
    auto xv = input.values(), gv = gamma.values(), bv = beta.values();
    std::vector<double> out(xv.size());
    std::vector<double> mean_v(n * groups), rstd_v(n * groups);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t gi = 0; gi < groups; ++gi) {
            const double* x = xv.data() + (b * c + gi * cpg) * s;
            double mu = 0.0;
            for (std::size_t i = 0; i < m; ++i) mu += x[i];
            mu /= static_cast<double>(m);
            double var = 0.0;
            for (std::size_t i = 0; i < m; ++i) var += (x[i] - mu) * (x[i] - mu);
            var /= static_cast<double>(m);
            const double rstd = 1.0 / std::sqrt(var + eps);
            mean_v[b * groups + gi] = mu;
            rstd_v[b * groups + gi] = rstd;
            for (std::size_t cc = 0; cc < cpg; ++cc) {
                const std::size_t ch = gi * cpg + cc;
                double* y = out.data() + (b * c + ch) * s;
                const double* xc = xv.data() + (b * c + ch) * s;
                for (std::size_t i = 0; i < s; ++i) y[i] = (xc[i] - mu) * rstd * gv[ch] + bv[ch];
            }
        }
    return make_result(input.shape(), std::move(out), {input, gamma, beta},
                       [input, gamma, beta, mean_v, rstd_v, n, c, s, groups, cpg, m](const TensorImpl& o) {
                           auto gx = detail::grad_of(input);
                           auto gg = detail::grad_of(gamma);
                           auto gb = detail::grad_of(beta);
                           auto xv = input.values(), gv = gamma.values();
                           std::vector<double> xhat(m), dxhat(m);
                           for (std::size_t b = 0; b < n; ++b)
                               for (std::size_t gi = 0; gi < groups; ++gi) {
                                   const double mu = mean_v[b * groups + gi], rstd = rstd_v[b * groups + gi];
                                   double sum_d = 0.0, sum_dx = 0.0;
                                   for (std::size_t cc = 0; cc < cpg; ++cc) {
                                       const std::size_t ch = gi * cpg + cc;
                                       const std::size_t off = (b * c + ch) * s;
                                       double sg = 0.0, sb = 0.0;
                                       for (std::size_t i = 0; i < s; ++i) {
                                           const double xh = (xv[off + i] - mu) * rstd;
                                           const double dy = o.grad[off + i];
                                           xhat[cc * s + i] = xh;
                                           dxhat[cc * s + i] = dy * gv[ch];
                                           sg += dy * xh;
                                           sb += dy;
                                           sum_d += dxhat[cc * s + i];
                                           sum_dx += dxhat[cc * s + i] * xh;
                                       }
                                       if (!gg.empty()) gg[ch] += sg;
                                       if (!gb.empty()) gb[ch] += sb;
                                   }
                                   if (gx.empty()) continue;
                                   const double inv_m = 1.0 / static_cast<double>(m);
                                   for (std::size_t cc = 0; cc < cpg; ++cc) {
                                       const std::size_t off = (b * c + gi * cpg + cc) * s;
                                       for (std::size_t i = 0; i < s; ++i) {
                                           const std::size_t j = cc * s + i;
                                           gx[off + i] += rstd * (dxhat[j] - inv_m * sum_d - xhat[j] * inv_m * sum_dx);
                                       }
                                   }
                               }
                       });
}

} // namespace tcseg
