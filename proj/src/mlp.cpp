#include "ems/mlp.hpp"

namespace ems {

int MlpShape::layer_in(int l) const {
    if (l == 0) return input;
    return hidden[l - 1];
}

int MlpShape::layer_out(int l) const {
    if (l == static_cast<int>(hidden.size())) return output;
    return hidden[l];
}

Index MlpShape::param_count() const {
    Index n = 0;
    for (int l = 0; l < layer_count(); ++l)
        n += static_cast<Index>(layer_in(l)) * layer_out(l) + layer_out(l);
    return n;
}

Index MlpShape::layer_offset(int l) const {
    Index n = 0;
    for (int k = 0; k < l; ++k)
        n += static_cast<Index>(layer_in(k)) * layer_out(k) + layer_out(k);
    return n;
}

namespace {

using WMap = Eigen::Map<const Matrix>;
using BMap = Eigen::Map<const Vector>;

}  // namespace

Vector mlp_init(const MlpShape& shape, std::mt19937_64& rng, Scalar output_gain) {
    Vector params = Vector::Zero(shape.param_count());
    std::normal_distribution<Scalar> normal(0.0, 1.0);
    for (int l = 0; l < shape.layer_count(); ++l) {
        const int in = shape.layer_in(l), out = shape.layer_out(l);
        Matrix raw(out, in);
        for (Index i = 0; i < raw.size(); ++i) raw.data()[i] = normal(rng);
        // orthogonal rows via QR of the transpose (or columns when out < in)
        Matrix w;
        if (out <= in) {
            Eigen::HouseholderQR<Matrix> qr(raw.transpose());
            Matrix q = qr.householderQ() * Matrix::Identity(in, out);
            w = q.transpose();
        } else {
            Eigen::HouseholderQR<Matrix> qr(raw);
            w = qr.householderQ() * Matrix::Identity(out, in);
        }
        const bool last = l == shape.layer_count() - 1;
        w *= last ? output_gain : 1.0;
        Eigen::Map<Matrix>(params.data() + shape.layer_offset(l), out, in) = w;
        // biases stay zero
    }
    return params;
}

Matrix mlp_forward(const MlpShape& shape, const Vector& params, const Matrix& x,
                   MlpWorkspace& ws) {
    if (x.cols() != shape.input) throw ValidationError("mlp: input width mismatch");
    if (params.size() != shape.param_count()) throw ValidationError("mlp: parameter size mismatch");
    ws.input = x;
    ws.post.assign(shape.layer_count(), Matrix());
    Matrix h = x;
    for (int l = 0; l < shape.layer_count(); ++l) {
        const int in = shape.layer_in(l), out = shape.layer_out(l);
        WMap w(params.data() + shape.layer_offset(l), out, in);
        BMap b(params.data() + shape.layer_offset(l) + static_cast<Index>(out) * in, out);
        Matrix z = h * w.transpose();
        z.rowwise() += b.transpose();
        if (l + 1 < shape.layer_count()) z = z.array().tanh();
        ws.post[l] = z;
        h = std::move(z);
    }
    return h;
}

void mlp_backward(const MlpShape& shape, const Vector& params, const MlpWorkspace& ws,
                  const Matrix& d_output, Eigen::Ref<Vector> grad) {
    const int layers = shape.layer_count();
    Matrix delta = d_output;  // d(loss)/d(pre-activation of the last layer)
    for (int l = layers - 1; l >= 0; --l) {
        const int in = shape.layer_in(l), out = shape.layer_out(l);
        const Matrix& below = l == 0 ? ws.input : ws.post[l - 1];
        Eigen::Map<Matrix> gw(grad.data() + shape.layer_offset(l), out, in);
        Eigen::Map<Vector> gb(grad.data() + shape.layer_offset(l) + static_cast<Index>(out) * in,
                              out);
        gw.noalias() += delta.transpose() * below;
        gb.noalias() += delta.colwise().sum().transpose();
        if (l > 0) {
            WMap w(params.data() + shape.layer_offset(l), out, in);
            Matrix d_below = delta * w;
            // tanh'(z) = 1 - tanh(z)^2, and post[l-1] holds tanh(z)
            delta = d_below.array() * (1.0 - ws.post[l - 1].array().square());
        }
    }
}

}  // namespace ems
