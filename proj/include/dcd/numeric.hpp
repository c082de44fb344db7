#pragma once

#include <functional>
#include <vector>

#include "dcd/matrix.hpp"

namespace dcd {

using LogitVector = std::vector<double>;

/// input * weights + bias (bias broadcast over rows). Output is checked finite.
Matrix dense_forward(const Matrix& input, const Matrix& weights, const Matrix& bias);

/// Max-shifted softmax: exp((z - max z)/tau) / Σ exp((z - max z)/tau).
/// Sums to 1 within 1e-12 and preserves the argmax.
LogitVector stable_softmax(const LogitVector& logits, double temperature = 1.0);

/// Central differences (f(θ+h·e_i) − f(θ−h·e_i)) / 2h per coordinate.
/// Throws NumericError naming the coordinate if f evaluates non-finite.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& params,
                        double step = 1e-5);

// ---------------------------------------------------------------------------
// Gradient tape: an ordered record of primitive applications (dense layers
// and tanh activations) replayed in reverse to accumulate parameter and input
// gradients. The model zoo is two fixed MLP shapes, so this per-layer record
// replaces a general graph engine.

enum class Primitive { kDense, kTanh };

struct TapeEntry {
    Primitive prim;
    int param_slot = -1;  // dense: index into the parameter list
    Matrix input;         // dense: layer input
    Matrix output;        // tanh: activated output (for the backward rule)
};

struct GradTape {
    std::vector<TapeEntry> entries;
    void clear() { entries.clear(); }
};

/// Per-slot parameter gradients; mirrors a layer list of (weights, bias).
struct ParamGrads {
    std::vector<Matrix> weights;
    std::vector<Matrix> bias;
};

/// dense_forward that records the application on `tape` under `param_slot`.
Matrix dense_forward(const Matrix& input, const Matrix& weights, const Matrix& bias,
                     GradTape& tape, int param_slot);

/// tanh that records the application on `tape`.
Matrix tanh_forward(const Matrix& input, GradTape& tape);

/// Replays `tape` in reverse from `upstream` (gradient of the scalar loss
/// w.r.t. the last recorded output), accumulating into `grads`. An empty tape
/// leaves `grads` untouched, i.e. zero gradients for a zero-initialized
/// accumulator. weights[slot] is needed to route gradients through dense layers.
void backward(const GradTape& tape, const std::vector<Matrix>& weights, const Matrix& upstream,
              ParamGrads& grads);

}  // namespace dcd
