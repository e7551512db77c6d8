#pragma once

#include <vector>

#include "treecnn/convolution.hpp"
#include "treecnn/numkernel.hpp"

namespace treecnn {

// Standard LSTM unit plus a softmax head on the final hidden state.
// h_0 = c_0 = 0.
struct LstmParams {
    std::size_t input_dim = 0;  // d_in
    std::size_t mem = 0;        // r
    std::size_t classes = 0;    // z

    Matrix W_w, W_f, W_o, W_u;  // r x d_in
    Matrix U_w, U_f, U_o, U_u;  // r x r
    Vector b_w, b_f, b_o, b_u;  // r

    Matrix Ws;                  // z x r
    Vector bs;                  // z

    LstmParams() = default;
    LstmParams(std::size_t input_dim, std::size_t mem, std::size_t classes);
};

struct LstmGrads {
    Matrix W_w, W_f, W_o, W_u;
    Matrix U_w, U_f, U_o, U_u;
    Vector b_w, b_f, b_o, b_u;
    Matrix Ws;
    Vector bs;

    explicit LstmGrads(const LstmParams& p);
};

struct LstmStepCache {
    Vector input, h_prev, c_prev;
    Vector w, f, o, u;  // gate activations
    Vector c, tanh_c, h;
};

struct SeqCache {
    std::vector<LstmStepCache> steps;
    Vector h_dropped;   // final h after output dropout (train mode)
    Vector out_mask;    // empty in eval mode
    Vector probs;
    RunMode mode = RunMode::Eval;
};

// Gates w, f, o, u; c_t = w_t*u_t + f_t*c_{t-1}; h_t = o_t*tanh(c_t).
LstmStepCache lstm_step(const LstmParams& p, const Vector& input, const Vector& h_prev,
                        const Vector& c_prev);

// Runs one step per column of P left to right and classifies from the final
// hidden state. Train mode applies dropout to h_n before the head.
Vector seq_forward(const LstmParams& p, const Matrix& p_mat, RunMode mode, SeededRng& rng,
                   double output_dropout, SeqCache* cache = nullptr);

// Gradients of -log probs[gold] wrt all tensors and wrt P.
void seq_backward(const LstmParams& p, const SeqCache& cache, int gold, LstmGrads& grads,
                  Matrix& d_p);

}  // namespace treecnn
