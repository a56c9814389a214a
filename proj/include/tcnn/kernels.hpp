// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hot loops of the network. Each parallel kernel has a serial reference
// kept for equivalence tests and the benchmark.

#include <cstddef>
#include <span>
#include <vector>

#include "tcnn/model.hpp"
#include "tcnn/tensor.hpp"

namespace tcnn::kernels {

/// Direct double-sum evaluation, one kernel at a time (serial reference).
void conv_bank_reference(const Matrix& x, const ConvBank& bank, std::span<KernelTrace> out);

/// Same result; kernels distributed across OpenMP threads. The window of
/// rows p..p+H-1 of a row-major X is contiguous, so each output is one dot
/// product of length H*D.
void conv_bank_parallel(const Matrix& x, const ConvBank& bank, std::span<KernelTrace> out);

/// v <- momentum*v - lr*g; w <- w + v, parallel over coordinates.
void momentum_update(std::span<double> weights, std::span<const double> grads, std::span<double> velocity,
                     double momentum, double learning_rate);

}  // namespace tcnn::kernels
