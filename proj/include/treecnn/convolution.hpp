#pragma once

#include <vector>

#include "treecnn/numkernel.hpp"

namespace treecnn {

enum class RunMode { Train, Eval };

enum class Activation { Relu, Identity };

// One filter over a d x n sentence matrix: weights d x l plus a scalar bias.
// Window sizes must be odd so half padding keeps feature maps at length n.
struct ConvFilter {
    std::size_t window = 0;
    Matrix weights;  // d x window
    double bias = 0.0;

    ConvFilter() = default;
    ConvFilter(std::size_t input_dim, std::size_t window);
};

struct ConvFilterBank {
    std::vector<ConvFilter> filters;
    Activation activation = Activation::Relu;
    double input_dropout = 0.5;
    double output_dropout = 0.2;

    std::size_t size() const { return filters.size(); }  // m
    std::size_t input_dim() const { return filters.empty() ? 0 : filters.front().weights.rows; }
};

struct ConvCache {
    Matrix x_dropped;                 // d x n, input after the (train-mode) column mask
    std::vector<Vector> preact;       // per filter, length n
    Vector input_mask;                // per-column, empty in eval mode
    Vector output_mask;
    RunMode mode = RunMode::Eval;
};

struct ConvGrads {
    std::vector<Matrix> d_weights;
    std::vector<double> d_bias;

    explicit ConvGrads(const ConvFilterBank& bank);
    void add_scaled(const ConvGrads& other, double factor);
};

// Half padding, unit strides: every feature map has length n. Row v of the
// returned m x n matrix is the feature map of filter v. Train mode applies
// one dropout mask per column to the input and another to the output.
Matrix conv_forward(const ConvFilterBank& bank, const Matrix& x, RunMode mode, SeededRng& rng,
                    ConvCache* cache = nullptr);

// Gradients of the loss wrt input, weights and biases, honoring the masks
// recorded by the forward pass. Returns dX; accumulates into grads.
Matrix conv_backward(const ConvFilterBank& bank, const ConvCache& cache, const Matrix& d_p,
                     ConvGrads& grads);

}  // namespace treecnn
