#include "treecnn/seqlstm.hpp"

#include <sstream>

namespace treecnn {

namespace {

Vector column(const Matrix& m, std::size_t j) {
    Vector out(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) out[i] = m.at(i, j);
    return out;
}

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

}  // namespace

LstmParams::LstmParams(std::size_t input_dim, std::size_t mem, std::size_t classes)
    : input_dim(input_dim),
      mem(mem),
      classes(classes),
      W_w(mem, input_dim),
      W_f(mem, input_dim),
      W_o(mem, input_dim),
      W_u(mem, input_dim),
      U_w(mem, mem),
      U_f(mem, mem),
      U_o(mem, mem),
      U_u(mem, mem),
      b_w(mem),
      b_f(mem),
      b_o(mem),
      b_u(mem),
      Ws(classes, mem),
      bs(classes) {}

LstmGrads::LstmGrads(const LstmParams& p)
    : W_w(p.mem, p.input_dim),
      W_f(p.mem, p.input_dim),
      W_o(p.mem, p.input_dim),
      W_u(p.mem, p.input_dim),
      U_w(p.mem, p.mem),
      U_f(p.mem, p.mem),
      U_o(p.mem, p.mem),
      U_u(p.mem, p.mem),
      b_w(p.mem),
      b_f(p.mem),
      b_o(p.mem),
      b_u(p.mem),
      Ws(p.classes, p.mem),
      bs(p.classes) {}

LstmStepCache lstm_step(const LstmParams& p, const Vector& input, const Vector& h_prev,
                        const Vector& c_prev) {
    if (input.size() != p.input_dim || h_prev.size() != p.mem || c_prev.size() != p.mem) {
        std::ostringstream msg;
        msg << "lstm_step: shapes (" << input.size() << ", " << h_prev.size() << ", "
            << c_prev.size() << ") do not match (d_in=" << p.input_dim << ", r=" << p.mem
            << ")";
        throw ShapeError(msg.str());
    }
    LstmStepCache s;
    s.input = input;
    s.h_prev = h_prev;
    s.c_prev = c_prev;
    s.w = sigmoid(add(add(matvec(p.W_w, input), matvec(p.U_w, h_prev)), p.b_w));
    s.f = sigmoid(add(add(matvec(p.W_f, input), matvec(p.U_f, h_prev)), p.b_f));
    s.o = sigmoid(add(add(matvec(p.W_o, input), matvec(p.U_o, h_prev)), p.b_o));
    s.u = tanh_v(add(add(matvec(p.W_u, input), matvec(p.U_u, h_prev)), p.b_u));
    s.c = add(hadamard(s.w, s.u), hadamard(s.f, c_prev));
    s.tanh_c = tanh_v(s.c);
    s.h = hadamard(s.o, s.tanh_c);
    return s;
}

Vector seq_forward(const LstmParams& p, const Matrix& p_mat, RunMode mode, SeededRng& rng,
                   double output_dropout, SeqCache* cache) {
    if (p_mat.rows != p.input_dim) {
        std::ostringstream msg;
        msg << "seq_forward: input rows " << p_mat.rows << " != " << p.input_dim;
        throw ShapeError(msg.str());
    }
    if (p_mat.cols == 0) throw ShapeError("seq_forward: empty sequence");

    SeqCache local;
    SeqCache& sc = cache ? *cache : local;
    sc.steps.clear();
    sc.mode = mode;
    Vector h(p.mem), c(p.mem);
    for (std::size_t t = 0; t < p_mat.cols; ++t) {
        LstmStepCache step = lstm_step(p, column(p_mat, t), h, c);
        h = step.h;
        c = step.c;
        sc.steps.push_back(std::move(step));
    }
    if (mode == RunMode::Train) {
        sc.out_mask = dropout_mask(rng, h.size(), output_dropout);
        sc.h_dropped = hadamard(h, sc.out_mask);
    } else {
        sc.out_mask = Vector();
        sc.h_dropped = h;
    }
    sc.probs = softmax(add(matvec(p.Ws, sc.h_dropped), p.bs));
    return sc.probs;
}

void seq_backward(const LstmParams& p, const SeqCache& cache, int gold, LstmGrads& grads,
                  Matrix& d_p) {
    const std::size_t n = cache.steps.size();
    if (n == 0) throw ShapeError("seq_backward: missing forward cache");
    if (d_p.rows != p.input_dim || d_p.cols != n) d_p = Matrix(p.input_dim, n);

    Vector ds = cache.probs;
    ds[static_cast<std::size_t>(gold)] -= 1.0;
    add_outer(grads.Ws, ds, cache.h_dropped);
    axpy(grads.bs, 1.0, ds);
    Vector dh = matvec_transposed(p.Ws, ds);
    if (cache.mode == RunMode::Train) dh = hadamard(dh, cache.out_mask);
    Vector dc(p.mem);

    for (std::size_t t = n; t-- > 0;) {
        const LstmStepCache& s = cache.steps[t];
        Vector d_o = hadamard(dh, s.tanh_c);
        axpy(dc, 1.0, tanh_grad_from_value(hadamard(dh, s.o), s.tanh_c));

        Vector d_w = hadamard(dc, s.u);
        Vector d_u = hadamard(dc, s.w);
        Vector d_f = hadamard(dc, s.c_prev);
        Vector dc_prev = hadamard(dc, s.f);

        Vector dsw = sigmoid_grad(d_w, s.w);
        Vector dsf = sigmoid_grad(d_f, s.f);
        Vector dso = sigmoid_grad(d_o, s.o);
        Vector dsu = tanh_grad_from_value(d_u, s.u);

        add_outer(grads.W_w, dsw, s.input);
        add_outer(grads.W_f, dsf, s.input);
        add_outer(grads.W_o, dso, s.input);
        add_outer(grads.W_u, dsu, s.input);
        add_outer(grads.U_w, dsw, s.h_prev);
        add_outer(grads.U_f, dsf, s.h_prev);
        add_outer(grads.U_o, dso, s.h_prev);
        add_outer(grads.U_u, dsu, s.h_prev);
        axpy(grads.b_w, 1.0, dsw);
        axpy(grads.b_f, 1.0, dsf);
        axpy(grads.b_o, 1.0, dso);
        axpy(grads.b_u, 1.0, dsu);

        Vector d_in = matvec_transposed(p.W_w, dsw);
        axpy(d_in, 1.0, matvec_transposed(p.W_f, dsf));
        axpy(d_in, 1.0, matvec_transposed(p.W_o, dso));
        axpy(d_in, 1.0, matvec_transposed(p.W_u, dsu));
        for (std::size_t i = 0; i < p.input_dim; ++i) d_p.at(i, t) += d_in[i];

        dh = matvec_transposed(p.U_w, dsw);
        axpy(dh, 1.0, matvec_transposed(p.U_f, dsf));
        axpy(dh, 1.0, matvec_transposed(p.U_o, dso));
        axpy(dh, 1.0, matvec_transposed(p.U_u, dsu));
        dc = std::move(dc_prev);
    }
}

}  // namespace treecnn
