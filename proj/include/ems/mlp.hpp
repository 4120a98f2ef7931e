#pragma once

#include "ems/types.hpp"

#include <random>
#include <vector>

namespace ems {

/// Fully-connected network with tanh hidden activations and a linear output.
/// Parameters live in a caller-owned flat vector: per layer, the weight
/// matrix in column-major order followed by the bias.
struct MlpShape {
    int input = 0;
    std::vector<int> hidden;
    int output = 0;

    int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
    int layer_in(int l) const;
    int layer_out(int l) const;
    Index param_count() const;
    Index layer_offset(int l) const;  // offset of layer l's weights in the flat vector
};

/// Activations cached by a forward pass, consumed by the backward pass.
struct MlpWorkspace {
    std::vector<Matrix> post;  // post[l] = activation after layer l (rows = samples)
    Matrix input;
};

/// Orthogonal weight init (QR of a seeded Gaussian draw) with zero biases;
/// the output layer is scaled by `output_gain`.
Vector mlp_init(const MlpShape& shape, std::mt19937_64& rng, Scalar output_gain = 0.01);

/// Batch forward; rows of `x` are samples. Returns rows x shape.output.
Matrix mlp_forward(const MlpShape& shape, const Vector& params, const Matrix& x,
                   MlpWorkspace& ws);

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
void mlp_backward(const MlpShape& shape, const Vector& params, const MlpWorkspace& ws,
                  const Matrix& d_output, Eigen::Ref<Vector> grad);

}  // namespace ems
