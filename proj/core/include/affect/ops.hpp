#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "affect/tensor.hpp"

namespace affect {

using Rng = std::mt19937_64;

// Elementwise binary ops. Either operand may broadcast when its shape equals
// the trailing dims of the other (leading 1s ignored) or it has one element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor neg(const Tensor& x);
Tensor square(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);  // rank 2 only
Tensor reshape(const Tensor& x, Shape shape);
Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
// Picks rows along axis 0; repeated indices accumulate their gradients.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);

// Negative axis counts from the back.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);

// Normalizes over the last dim with population variance, then gain * xhat + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Inverted dropout: kept entries scale by 1/(1-p); identity when !training.
Tensor dropout(const Tensor& x, double p, bool training, Rng* rng);

// x: [c_in x len], weights: [c_out x c_in x k], bias: [c_out]. Symmetric zero
// padding of (k-1)*dilation/2 per side keeps the length; k must be odd.
Tensor conv1d_dilated(const Tensor& x, const Tensor& weights, const std::optional<Tensor>& bias,
                      std::size_t dilation);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);

}  // namespace affect
