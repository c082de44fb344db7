#include "dcd/numeric.hpp"

#include <algorithm>
#include <cmath>

#include "dcd/kernels.hpp"

namespace dcd {

Matrix dense_forward(const Matrix& input, const Matrix& weights, const Matrix& bias) {
    if (input.cols() != weights.rows()) {
        throw ShapeError("dense_forward: input " + input.shape_str() + " vs weights " +
                         weights.shape_str());
    }
    if (bias.rows() != 1 || bias.cols() != weights.cols()) {
        throw ShapeError("dense_forward: bias " + bias.shape_str() + " vs weights " +
                         weights.shape_str());
    }
    Matrix out = kern::matmul(input, weights);
    kern::add_row_vector(out, bias);
    out.require_finite("dense_forward");
    return out;
}

LogitVector stable_softmax(const LogitVector& logits, double temperature) {
    if (logits.empty()) throw UsageError("stable_softmax: empty logit vector");
    if (temperature <= 0.0) throw ConfigError("stable_softmax: temperature must be > 0");
    double mx = logits[0];
    for (double v : logits) {
        if (!std::isfinite(v)) throw NumericError("stable_softmax: non-finite logit");
        mx = std::max(mx, v);
    }
    LogitVector out(logits.size());
    double denom = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / temperature);
        denom += out[i];
    }
    for (double& v : out) v /= denom;
    return out;
}

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& params,
                        double step) {
    if (step <= 0.0) throw ConfigError("finite_diff_grad: step must be > 0");
    Matrix grad(params.rows(), params.cols());
    Matrix probe = params;
    for (size_t i = 0; i < params.size(); ++i) {
        const double saved = probe.data()[i];
        probe.data()[i] = saved + step;
        const double up = f(probe);
        probe.data()[i] = saved - step;
        const double down = f(probe);
        probe.data()[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                               std::to_string(i));
        }
        grad.data()[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

Matrix dense_forward(const Matrix& input, const Matrix& weights, const Matrix& bias,
                     GradTape& tape, int param_slot) {
    Matrix out = dense_forward(input, weights, bias);
    tape.entries.push_back(TapeEntry{Primitive::kDense, param_slot, input, Matrix{}});
    return out;
}

Matrix tanh_forward(const Matrix& input, GradTape& tape) {
    Matrix out = kern::tanh_map(input);
    tape.entries.push_back(TapeEntry{Primitive::kTanh, -1, Matrix{}, out});
    return out;
}

void backward(const GradTape& tape, const std::vector<Matrix>& weights, const Matrix& upstream,
              ParamGrads& grads) {
    Matrix g = upstream;
    for (auto it = tape.entries.rbegin(); it != tape.entries.rend(); ++it) {
        switch (it->prim) {
            case Primitive::kTanh:
                g = kern::tanh_backward(g, it->output);
                break;
            case Primitive::kDense: {
                const int slot = it->param_slot;
                Matrix dw = kern::matmul_atb(it->input, g);
                Matrix db = kern::col_sums(g);
                for (size_t i = 0; i < dw.size(); ++i) grads.weights[slot].data()[i] += dw.data()[i];
                for (size_t i = 0; i < db.size(); ++i) grads.bias[slot].data()[i] += db.data()[i];
                g = kern::matmul_abt(g, weights[slot]);
                break;
            }
        }
    }
}

}  // namespace dcd
