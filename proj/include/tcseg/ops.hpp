#pragma once
// Differentiable tensor ops. Volumetric tensors use the [N, C, D, H, W]
// layout; loss ops treat axis 1 as the class axis and flatten the rest.

#include <cstddef>

#include "tcseg/tensor.hpp"

namespace tcseg {

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDiceSmooth = 1e-5;

enum class Padding { valid, same };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor softmax(const Tensor& logits, std::size_t axis = 1);

// Channel c of a [N, C, ...] tensor, as [N, 1, ...].
Tensor select_channel(const Tensor& x, std::size_t c);
// Rows [begin, begin + count) along the batch axis.
Tensor slice_batch(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_batch(const std::vector<Tensor>& parts);

// weight: [Co, Ci, kd, kh, kw]; bias: [Co] or undefined. Same padding needs odd kernels
// and yields ceil(extent / stride) outputs.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              Padding padding);
Tensor conv3d(const Tensor& input, const Tensor& weight, std::size_t stride = 1,
              Padding padding = Padding::same);

// weight: [Ci, Co, kd, kh, kw]; output extent (in - 1) * stride + k.
Tensor transposed_conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                         std::size_t stride);
Tensor transposed_conv3d(const Tensor& input, const Tensor& weight, std::size_t stride);

// Align-corners-off trilinear interpolation over the trailing three axes.
Tensor trilinear_upsample(const Tensor& input, std::size_t factor);

// Normalizes each (sample, group) over its channels and spatial extent.
Tensor group_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, std::size_t groups,
                  double eps = 1e-5);

// Mean over mask==1 voxels of -sum_k t_k log(clamp(p_k)). Zero for an empty mask.
// mask is [N, spatial...] with values in {0, 1}.
Tensor masked_cross_entropy(const Tensor& p, const Tensor& target, const Tensor& mask);
Tensor cross_entropy(const Tensor& p, const Tensor& target);
// Complementary CE on renormalized (1 - p)/(K - 1) against (1 - t)/(K - 1).
Tensor masked_negative_cross_entropy(const Tensor& p, const Tensor& target, const Tensor& mask);

// 1 - (2 sum p t + s) / (sum p + sum t + s).
Tensor dice_loss(const Tensor& p, const Tensor& target);

// Mean over voxels of the squared L2 distance along the class axis.
Tensor mean_squared_distance(const Tensor& a, const Tensor& b);

// Cosine similarity of every voxel embedding in features [N, F, ...] to each
// row of prototypes [K, F]; result [N, K, ...]. Norms are guarded by eps.
// Gradients flow into features only.
Tensor cosine_similarity_map(const Tensor& features, const Tensor& prototypes, double eps);

} // namespace tcseg
