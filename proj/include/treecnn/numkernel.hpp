#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "treecnn/errors.hpp"

namespace treecnn {

// Dense row-major matrix of 64-bit floats.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    std::size_t size() const { return data.size(); }
};

struct Vector {
    std::vector<double> data;

    Vector() = default;
    explicit Vector(std::size_t n, double fill = 0.0) : data(n, fill) {}
    Vector(std::initializer_list<double> init) : data(init) {}

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    std::size_t size() const { return data.size(); }
};

// xoshiro256** seeded through splitmix64. The exact algorithm is pinned so
// that streams are bit-identical across platforms for the same seed.
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t next_u64();
    // Uniform in [0, 1), 53-bit resolution.
    double next_double();
    double uniform(double lo, double hi);
    std::uint64_t next_below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i + 1));
            std::swap(items[i], items[j]);
        }
    }

  private:
    std::uint64_t state_[4];
};

Vector matvec(const Matrix& m, const Vector& v);
// m^T * v; used by every backward pass.
Vector matvec_transposed(const Matrix& m, const Vector& v);
// out += a * b^T
void add_outer(Matrix& out, const Vector& a, const Vector& b);

double hadamard_sum(const Matrix& a, const Matrix& b);

Vector softmax(const Vector& v);
Vector sigmoid(const Vector& v);
Vector tanh_v(const Vector& v);
Vector relu(const Vector& v);

Vector add(const Vector& a, const Vector& b);
Vector hadamard(const Vector& a, const Vector& b);
void axpy(Vector& out, double alpha, const Vector& x);

std::size_t argmax(const Vector& v);

// Inverted-dropout mask: entries are 0 with probability rate, else
// 1/(1 - rate). Evaluation applies no mask at all, so a trained layer
// needs no rescaling.
Vector dropout_mask(SeededRng& rng, std::size_t len, double rate);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

}  // namespace treecnn
