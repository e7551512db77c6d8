#include "treecnn/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace treecnn {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

[[noreturn]] void throw_shape(const char* op, std::size_t a_rows, std::size_t a_cols,
                              std::size_t b_rows, std::size_t b_cols) {
    std::ostringstream msg;
    msg << op << ": shape mismatch, " << a_rows << "x" << a_cols << " vs " << b_rows
        << "x" << b_cols;
    throw ShapeError(msg.str());
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
}

std::uint64_t SeededRng::next_u64() {
    std::uint64_t* s = state_;
    const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
}

double SeededRng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
    return lo + next_double() * (hi - lo);
}

std::uint64_t SeededRng::next_below(std::uint64_t n) {
    return n == 0 ? 0 : next_u64() % n;
}

Vector matvec(const Matrix& m, const Vector& v) {
    if (m.cols != v.size()) throw_shape("matvec", m.rows, m.cols, v.size(), 1);
    Vector out(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double acc = 0.0;
        const double* row = m.data.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) acc += row[j] * v[j];
        out[i] = acc;
    }
    return out;
}

Vector matvec_transposed(const Matrix& m, const Vector& v) {
    if (m.rows != v.size()) throw_shape("matvec_transposed", m.cols, m.rows, v.size(), 1);
    Vector out(m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.data.data() + i * m.cols;
        const double vi = v[i];
        for (std::size_t j = 0; j < m.cols; ++j) out[j] += row[j] * vi;
    }
    return out;
}

void add_outer(Matrix& out, const Vector& a, const Vector& b) {
    if (out.rows != a.size() || out.cols != b.size())
        throw_shape("add_outer", out.rows, out.cols, a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        double* row = out.data.data() + i * out.cols;
        const double ai = a[i];
        for (std::size_t j = 0; j < b.size(); ++j) row[j] += ai * b[j];
    }
}

double hadamard_sum(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw_shape("hadamard_sum", a.rows, a.cols, b.rows, b.cols);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
    return acc;
}

Vector softmax(const Vector& v) {
    if (v.size() == 0) throw ShapeError("softmax: empty vector");
    const double max = *std::max_element(v.data.begin(), v.data.end());
    Vector out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - max);
        sum += out[i];
    }
    for (auto& x : out.data) x /= sum;
    return out;
}

Vector sigmoid(const Vector& v) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-v[i]));
    return out;
}

Vector tanh_v(const Vector& v) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
    return out;
}

Vector relu(const Vector& v) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
    return out;
}

Vector add(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw_shape("add", a.size(), 1, b.size(), 1);
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Vector hadamard(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw_shape("hadamard", a.size(), 1, b.size(), 1);
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

void axpy(Vector& out, double alpha, const Vector& x) {
    if (out.size() != x.size()) throw_shape("axpy", out.size(), 1, x.size(), 1);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] += alpha * x[i];
}

std::size_t argmax(const Vector& v) {
    if (v.size() == 0) throw ShapeError("argmax: empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

Vector dropout_mask(SeededRng& rng, std::size_t len, double rate) {
    if (rate < 0.0 || rate >= 1.0) {
        std::ostringstream msg;
        msg << "dropout_mask: rate must be in [0,1), got " << rate;
        throw ConfigError(msg.str());
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    Vector mask(len);
    for (std::size_t i = 0; i < len; ++i)
        mask[i] = rng.next_double() < rate ? 0.0 : keep_scale;
    return mask;
}

bool all_finite(const Vector& v) {
    for (double x : v.data)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const Matrix& m) {
    for (double x : m.data)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace treecnn
