#include "treecnn/treelstm.hpp"

#include <cmath>
#include <sstream>

namespace treecnn {

namespace {

Vector column(const Matrix& m, std::size_t j) {
    Vector out(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) out[i] = m.at(i, j);
    return out;
}

// d(sigmoid) through the activation value: s * (1 - s)
Vector sigmoid_grad(const Vector& ds, const Vector& s) {
    Vector out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = ds[i] * s[i] * (1.0 - s[i]);
    return out;
}

Vector tanh_grad_from_value(const Vector& dt, const Vector& t) {
    Vector out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = dt[i] * (1.0 - t[i] * t[i]);
    return out;
}

struct TreeWalk {
    const TreeLstmParams& params;
    const Matrix& p_mat;
    RunMode mode;
    SeededRng& rng;
    double output_dropout;
    std::size_t next_col = 0;
    double loss = 0.0;
    std::size_t labeled = 0;

    std::unique_ptr<NodeAnnotation> visit(const SentimentTree& node) {
        auto ann = std::make_unique<NodeAnnotation>();
        ann->node = &node;
        ann->gold = node.label;
        if (node.is_leaf()) {
            ann->leaf = true;
            ann->leaf_col = next_col++;
            ann->leaf_cache = leaf_forward(params, column(p_mat, ann->leaf_col));
        } else {
            ann->left = visit(*node.left);
            ann->right = visit(*node.right);
            ann->compose_cache =
                compose_forward(params, ann->left->h(), ann->left->c(), ann->right->h(),
                                ann->right->c());
        }
        const Vector& h = ann->h();
        if (mode == RunMode::Train) {
            ann->out_mask = dropout_mask(rng, h.size(), output_dropout);
            ann->h_dropped = hadamard(h, ann->out_mask);
        } else {
            ann->h_dropped = h;
        }
        ann->probs = node_predict_from_dropped(ann->h_dropped);
        if (ann->gold) {
            ++labeled;
            loss -= std::log(ann->probs[static_cast<std::size_t>(*ann->gold)]);
        }
        return ann;
    }

    Vector node_predict_from_dropped(const Vector& hd) {
        return softmax(add(matvec(params.Ws, hd), params.bs));
    }
};

struct TreeBackWalk {
    const TreeLstmParams& params;
    const Matrix& p_mat;
    TreeLstmGrads& grads;
    Matrix& d_p;
    bool train;

    void visit(const NodeAnnotation& ann, Vector dh, Vector dc) {
        // Output module first: its gradient adds to dh through the mask.
        if (ann.gold) {
            Vector ds = ann.probs;
            ds[static_cast<std::size_t>(*ann.gold)] -= 1.0;
            add_outer(grads.Ws, ds, ann.h_dropped);
            axpy(grads.bs, 1.0, ds);
            Vector dhd = matvec_transposed(params.Ws, ds);
            if (train) dhd = hadamard(dhd, ann.out_mask);
            axpy(dh, 1.0, dhd);
        }

        if (ann.leaf) {
            const LeafCache& lc = ann.leaf_cache;
            Vector d_o = hadamard(dh, lc.tanh_c);
            axpy(dc, 1.0, tanh_grad_from_value(hadamard(dh, lc.o), lc.tanh_c));
            Vector dso = sigmoid_grad(d_o, lc.o);
            const Vector x = column(p_mat, ann.leaf_col);
            add_outer(grads.leaf_Wo, dso, x);
            axpy(grads.leaf_ao, 1.0, dso);
            add_outer(grads.leaf_Wc, dc, x);
            axpy(grads.leaf_ac, 1.0, dc);
            Vector dx = matvec_transposed(params.leaf_Wo, dso);
            axpy(dx, 1.0, matvec_transposed(params.leaf_Wc, dc));
            for (std::size_t i = 0; i < dx.size(); ++i) d_p.at(i, ann.leaf_col) += dx[i];
            return;
        }

        const ComposeCache& cc = ann.compose_cache;
        Vector d_o = hadamard(dh, cc.tanh_c);
        axpy(dc, 1.0, tanh_grad_from_value(hadamard(dh, cc.o), cc.tanh_c));

        Vector d_i = hadamard(dc, cc.u);
        Vector d_u = hadamard(dc, cc.i);
        Vector d_fl = hadamard(dc, ann.left->c());
        Vector d_fr = hadamard(dc, ann.right->c());
        Vector dc_l = hadamard(dc, cc.f_l);
        Vector dc_r = hadamard(dc, cc.f_r);

        Vector dsi = sigmoid_grad(d_i, cc.i);
        Vector dsfl = sigmoid_grad(d_fl, cc.f_l);
        Vector dsfr = sigmoid_grad(d_fr, cc.f_r);
        Vector dso = sigmoid_grad(d_o, cc.o);
        Vector dsu = tanh_grad_from_value(d_u, cc.u);

        const Vector& h_l = ann.left->h();
        const Vector& h_r = ann.right->h();
        add_outer(grads.U_i_l, dsi, h_l);
        add_outer(grads.U_i_r, dsi, h_r);
        add_outer(grads.U_fl_l, dsfl, h_l);
        add_outer(grads.U_fl_r, dsfl, h_r);
        add_outer(grads.U_fr_l, dsfr, h_l);
        add_outer(grads.U_fr_r, dsfr, h_r);
        add_outer(grads.U_o_l, dso, h_l);
        add_outer(grads.U_o_r, dso, h_r);
        add_outer(grads.U_u_l, dsu, h_l);
        add_outer(grads.U_u_r, dsu, h_r);
        axpy(grads.b_i, 1.0, dsi);
        axpy(grads.b_f, 1.0, dsfl);
        axpy(grads.b_f, 1.0, dsfr);
        axpy(grads.b_o, 1.0, dso);
        axpy(grads.b_u, 1.0, dsu);

        Vector dh_l = matvec_transposed(params.U_i_l, dsi);
        axpy(dh_l, 1.0, matvec_transposed(params.U_fl_l, dsfl));
        axpy(dh_l, 1.0, matvec_transposed(params.U_fr_l, dsfr));
        axpy(dh_l, 1.0, matvec_transposed(params.U_o_l, dso));
        axpy(dh_l, 1.0, matvec_transposed(params.U_u_l, dsu));

        Vector dh_r = matvec_transposed(params.U_i_r, dsi);
        axpy(dh_r, 1.0, matvec_transposed(params.U_fl_r, dsfl));
        axpy(dh_r, 1.0, matvec_transposed(params.U_fr_r, dsfr));
        axpy(dh_r, 1.0, matvec_transposed(params.U_o_r, dso));
        axpy(dh_r, 1.0, matvec_transposed(params.U_u_r, dsu));

        visit(*ann.left, std::move(dh_l), std::move(dc_l));
        visit(*ann.right, std::move(dh_r), std::move(dc_r));
    }
};

}  // namespace

TreeLstmParams::TreeLstmParams(std::size_t input_dim, std::size_t mem, std::size_t classes)
    : input_dim(input_dim),
      mem(mem),
      classes(classes),
      leaf_Wo(mem, input_dim),
      leaf_Wc(mem, input_dim),
      leaf_ao(mem),
      leaf_ac(mem),
      U_i_l(mem, mem),
      U_i_r(mem, mem),
      U_fl_l(mem, mem),
      U_fl_r(mem, mem),
      U_fr_l(mem, mem),
      U_fr_r(mem, mem),
      U_o_l(mem, mem),
      U_o_r(mem, mem),
      U_u_l(mem, mem),
      U_u_r(mem, mem),
      b_i(mem),
      b_f(mem),
      b_o(mem),
      b_u(mem),
      Ws(classes, mem),
      bs(classes) {}

TreeLstmGrads::TreeLstmGrads(const TreeLstmParams& p)
    : leaf_Wo(p.mem, p.input_dim),
      leaf_Wc(p.mem, p.input_dim),
      leaf_ao(p.mem),
      leaf_ac(p.mem),
      U_i_l(p.mem, p.mem),
      U_i_r(p.mem, p.mem),
      U_fl_l(p.mem, p.mem),
      U_fl_r(p.mem, p.mem),
      U_fr_l(p.mem, p.mem),
      U_fr_r(p.mem, p.mem),
      U_o_l(p.mem, p.mem),
      U_o_r(p.mem, p.mem),
      U_u_l(p.mem, p.mem),
      U_u_r(p.mem, p.mem),
      b_i(p.mem),
      b_f(p.mem),
      b_o(p.mem),
      b_u(p.mem),
      Ws(p.classes, p.mem),
      bs(p.classes) {}

LeafCache leaf_forward(const TreeLstmParams& p, const Vector& x) {
    if (x.size() != p.input_dim) {
        std::ostringstream msg;
        msg << "leaf_forward: input size " << x.size() << " != " << p.input_dim;
        throw ShapeError(msg.str());
    }
    LeafCache out;
    out.o = sigmoid(add(matvec(p.leaf_Wo, x), p.leaf_ao));
    out.c = add(matvec(p.leaf_Wc, x), p.leaf_ac);
    out.tanh_c = tanh_v(out.c);
    out.h = hadamard(out.o, out.tanh_c);
    return out;
}

ComposeCache compose_forward(const TreeLstmParams& p, const Vector& h_l, const Vector& c_l,
                             const Vector& h_r, const Vector& c_r) {
    if (h_l.size() != p.mem || c_l.size() != p.mem || h_r.size() != p.mem ||
        c_r.size() != p.mem) {
        throw ShapeError("compose_forward: child state size mismatch");
    }
    ComposeCache out;
    out.i = sigmoid(add(add(matvec(p.U_i_l, h_l), matvec(p.U_i_r, h_r)), p.b_i));
    out.f_l = sigmoid(add(add(matvec(p.U_fl_l, h_l), matvec(p.U_fl_r, h_r)), p.b_f));
    out.f_r = sigmoid(add(add(matvec(p.U_fr_l, h_l), matvec(p.U_fr_r, h_r)), p.b_f));
    out.o = sigmoid(add(add(matvec(p.U_o_l, h_l), matvec(p.U_o_r, h_r)), p.b_o));
    out.u = tanh_v(add(add(matvec(p.U_u_l, h_l), matvec(p.U_u_r, h_r)), p.b_u));
    out.c = add(add(hadamard(out.i, out.u), hadamard(out.f_l, c_l)), hadamard(out.f_r, c_r));
    out.tanh_c = tanh_v(out.c);
    out.h = hadamard(out.o, out.tanh_c);
    return out;
}

Vector node_predict(const TreeLstmParams& p, const Vector& h) {
    return softmax(add(matvec(p.Ws, h), p.bs));
}

TreeForwardResult tree_forward(const TreeLstmParams& p, const SentimentTree& tree,
                               const Matrix& p_mat, RunMode mode, SeededRng& rng,
                               double output_dropout) {
    const std::size_t leaves = leaf_tokens(tree).size();
    if (leaves != p_mat.cols) {
        std::ostringstream msg;
        msg << "tree/feature mismatch: " << leaves << " leaves vs " << p_mat.cols
            << " feature columns for sentence '";
        auto toks = leaf_tokens(tree);
        for (std::size_t i = 0; i < toks.size(); ++i) msg << (i ? " " : "") << toks[i];
        msg << "'";
        throw DataError(msg.str());
    }
    TreeWalk walk{p, p_mat, mode, rng, output_dropout};
    TreeForwardResult result;
    result.root = walk.visit(tree);
    result.loss = walk.loss;
    result.labeled_nodes = walk.labeled;
    return result;
}

void tree_backward(const TreeLstmParams& p, const TreeForwardResult& fwd, const Matrix& p_mat,
                   TreeLstmGrads& grads, Matrix& d_p) {
    if (!fwd.root) throw ShapeError("tree_backward: missing forward cache");
    if (d_p.rows != p.input_dim || d_p.cols != p_mat.cols) {
        d_p = Matrix(p.input_dim, p_mat.cols);
    }
    TreeBackWalk walk{p, p_mat, grads, d_p, !fwd.root->out_mask.data.empty()};
    walk.visit(*fwd.root, Vector(p.mem), Vector(p.mem));
}

}  // namespace treecnn
