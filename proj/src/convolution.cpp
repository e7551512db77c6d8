#include "treecnn/convolution.hpp"

#include <sstream>

namespace treecnn {

namespace {

double activate(Activation act, double z) {
    if (act == Activation::Relu) return z > 0.0 ? z : 0.0;
    return z;
}

double activate_grad(Activation act, double z) {
    if (act == Activation::Relu) return z > 0.0 ? 1.0 : 0.0;
    return 1.0;
}

}  // namespace

ConvFilter::ConvFilter(std::size_t input_dim, std::size_t window)
    : window(window), weights(input_dim, window) {
    if (window % 2 == 0) {
        std::ostringstream msg;
        msg << "filter window must be odd, got " << window;
        throw ConfigError(msg.str());
    }
}

ConvGrads::ConvGrads(const ConvFilterBank& bank) {
    d_weights.reserve(bank.filters.size());
    for (const auto& f : bank.filters) d_weights.emplace_back(f.weights.rows, f.weights.cols);
    d_bias.assign(bank.filters.size(), 0.0);
}

void ConvGrads::add_scaled(const ConvGrads& other, double factor) {
    for (std::size_t v = 0; v < d_weights.size(); ++v) {
        for (std::size_t i = 0; i < d_weights[v].data.size(); ++i)
            d_weights[v].data[i] += factor * other.d_weights[v].data[i];
        d_bias[v] += factor * other.d_bias[v];
    }
}

Matrix conv_forward(const ConvFilterBank& bank, const Matrix& x, RunMode mode, SeededRng& rng,
                    ConvCache* cache) {
    const std::size_t d = bank.input_dim();
    const std::size_t n = x.cols;
    if (x.rows != d) {
        std::ostringstream msg;
        msg << "conv_forward: input rows " << x.rows << " != filter dim " << d;
        throw ShapeError(msg.str());
    }
    if (n == 0) throw ShapeError("conv_forward: empty sentence");

    // Dropout granularity is one mask value per token position, shared
    // across rows, so whole word vectors are kept or dropped.
    Vector in_mask, out_mask;
    Matrix xd = x;
    if (mode == RunMode::Train) {
        in_mask = dropout_mask(rng, n, bank.input_dropout);
        out_mask = dropout_mask(rng, n, bank.output_dropout);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < n; ++j) xd.at(i, j) *= in_mask[j];
    }

    const std::size_t m = bank.size();
    Matrix p(m, n);
    std::vector<Vector> preact(m);
    for (std::size_t v = 0; v < m; ++v) {
        const ConvFilter& f = bank.filters[v];
        const std::size_t half = f.window / 2;
        Vector z(n);
        for (std::size_t j = 0; j < n; ++j) {
            double acc = f.bias;
            for (std::size_t b = 0; b < f.window; ++b) {
                // Source column under half padding; out-of-range reads are zero.
                const std::ptrdiff_t src =
                    static_cast<std::ptrdiff_t>(j + b) - static_cast<std::ptrdiff_t>(half);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
                for (std::size_t i = 0; i < d; ++i)
                    acc += f.weights.at(i, b) * xd.at(i, static_cast<std::size_t>(src));
            }
            z[j] = acc;
            double out = activate(bank.activation, acc);
            if (mode == RunMode::Train) out *= out_mask[j];
            p.at(v, j) = out;
        }
        preact[v] = std::move(z);
    }

    if (cache) {
        cache->x_dropped = std::move(xd);
        cache->preact = std::move(preact);
        cache->input_mask = std::move(in_mask);
        cache->output_mask = std::move(out_mask);
        cache->mode = mode;
    }
    return p;
}

Matrix conv_backward(const ConvFilterBank& bank, const ConvCache& cache, const Matrix& d_p,
                     ConvGrads& grads) {
    const std::size_t d = bank.input_dim();
    const std::size_t m = bank.size();
    const std::size_t n = cache.x_dropped.cols;
    if (d_p.rows != m || d_p.cols != n) {
        std::ostringstream msg;
        msg << "conv_backward: dP is " << d_p.rows << "x" << d_p.cols << ", expected " << m
            << "x" << n;
        throw ShapeError(msg.str());
    }
    const bool train = cache.mode == RunMode::Train;

    Matrix dxd(d, n);
    for (std::size_t v = 0; v < m; ++v) {
        const ConvFilter& f = bank.filters[v];
        const std::size_t half = f.window / 2;
        Matrix& dw = grads.d_weights[v];
        for (std::size_t j = 0; j < n; ++j) {
            double dz = d_p.at(v, j);
            if (train) dz *= cache.output_mask[j];
            dz *= activate_grad(bank.activation, cache.preact[v][j]);
            if (dz == 0.0) continue;
            grads.d_bias[v] += dz;
            for (std::size_t b = 0; b < f.window; ++b) {
                const std::ptrdiff_t src =
                    static_cast<std::ptrdiff_t>(j + b) - static_cast<std::ptrdiff_t>(half);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
                const auto sj = static_cast<std::size_t>(src);
                for (std::size_t i = 0; i < d; ++i) {
                    dw.at(i, b) += dz * cache.x_dropped.at(i, sj);
                    dxd.at(i, sj) += dz * f.weights.at(i, b);
                }
            }
        }
    }

    if (train) {
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < n; ++j) dxd.at(i, j) *= cache.input_mask[j];
    }
    return dxd;
}

}  // namespace treecnn
