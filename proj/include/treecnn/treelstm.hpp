#pragma once

#include <memory>
#include <optional>

#include "treecnn/convolution.hpp"
#include "treecnn/numkernel.hpp"
#include "treecnn/treebank.hpp"

namespace treecnn {

// All trainable tensors of the constituency Tree-LSTM. The composer has one
// r x r matrix per (gate, child) pair and a single forget bias shared by
// both forget gates.
struct TreeLstmParams {
    std::size_t input_dim = 0;  // d_in, the filter count when stacked on conv
    std::size_t mem = 0;        // r
    std::size_t classes = 0;    // z

    Matrix leaf_Wo, leaf_Wc;    // r x d_in
    Vector leaf_ao, leaf_ac;    // r

    Matrix U_i_l, U_i_r;        // input gate
    Matrix U_fl_l, U_fl_r;      // left-forget gate
    Matrix U_fr_l, U_fr_r;      // right-forget gate
    Matrix U_o_l, U_o_r;        // output gate
    Matrix U_u_l, U_u_r;        // update
    Vector b_i, b_f, b_o, b_u;

    Matrix Ws;                  // z x r
    Vector bs;                  // z

    TreeLstmParams() = default;
    TreeLstmParams(std::size_t input_dim, std::size_t mem, std::size_t classes);
};

struct TreeLstmGrads {
    Matrix leaf_Wo, leaf_Wc;
    Vector leaf_ao, leaf_ac;
    Matrix U_i_l, U_i_r, U_fl_l, U_fl_r, U_fr_l, U_fr_r, U_o_l, U_o_r, U_u_l, U_u_r;
    Vector b_i, b_f, b_o, b_u;
    Matrix Ws;
    Vector bs;

    explicit TreeLstmGrads(const TreeLstmParams& p);
};

struct LeafCache {
    Vector o, c, tanh_c, h;
};

struct ComposeCache {
    Vector i, f_l, f_r, o, u, c, tanh_c, h;
};

// Per-node annotation: state, prediction, and the activations the backward
// pass needs.
struct NodeAnnotation {
    const SentimentTree* node = nullptr;
    std::optional<int> gold;
    bool leaf = false;
    std::size_t leaf_col = 0;      // column of P consumed by a leaf
    LeafCache leaf_cache;
    ComposeCache compose_cache;
    Vector h_dropped;              // h after output-layer dropout (train mode)
    Vector out_mask;               // empty in eval mode
    Vector probs;
    std::unique_ptr<NodeAnnotation> left, right;

    const Vector& h() const { return leaf ? leaf_cache.h : compose_cache.h; }
    const Vector& c() const { return leaf ? leaf_cache.c : compose_cache.c; }
};

struct TreeForwardResult {
    std::unique_ptr<NodeAnnotation> root;
    double loss = 0.0;
    std::size_t labeled_nodes = 0;
};

// o = sigmoid(Wo x + ao); c = Wc x + ac; h = o * tanh(c)
LeafCache leaf_forward(const TreeLstmParams& p, const Vector& x);

ComposeCache compose_forward(const TreeLstmParams& p, const Vector& h_l, const Vector& c_l,
                             const Vector& h_r, const Vector& c_r);

// softmax(Ws h + bs)
Vector node_predict(const TreeLstmParams& p, const Vector& h);

// Leaf i consumes column i of P; the composer is applied recursively; the
// loss sums -log p(gold) over labeled nodes. Train mode applies dropout
// (output_dropout) to h before the softmax layer at every node.
TreeForwardResult tree_forward(const TreeLstmParams& p, const SentimentTree& tree,
                               const Matrix& p_mat, RunMode mode, SeededRng& rng,
                               double output_dropout);

// Exact gradients of the node-summed loss wrt every tensor and wrt P.
void tree_backward(const TreeLstmParams& p, const TreeForwardResult& fwd, const Matrix& p_mat,
                   TreeLstmGrads& grads, Matrix& d_p);

}  // namespace treecnn
