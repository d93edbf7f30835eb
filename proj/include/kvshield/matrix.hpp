#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <string>
#include <vector>

#include "kvshield/errors.hpp"
#include "kvshield/rng.hpp"

namespace kvshield {

// Dense row-major matrix over float or double. Batch size is always 1 in
// this engine, so every tensor is 2-D; a token activation is a 1 x d row.
template <typename Scalar>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Scalar> data;  // rows * cols, row-major

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, Scalar(0)) {}

  Mat(std::initializer_list<std::initializer_list<Scalar>> init) {
    rows = init.size();
    cols = rows == 0 ? 0 : init.begin()->size();
    data.reserve(rows * cols);
    for (const auto& r : init) {
      if (r.size() != cols) throw ShapeError("Mat: ragged initializer");
      data.insert(data.end(), r.begin(), r.end());
    }
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = Scalar(1);
    return m;
  }

  Scalar& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const Scalar& at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool empty() const { return rows == 0 || cols == 0; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

// Matrix product with a fixed reduction order: for every output entry the
// sum over the inner index k runs in ascending k. Equivalence tests against
// the naive triple-loop oracle are bit-exact because both sum in this order.
template <typename Scalar>
Mat<Scalar> matmul(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                     " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
  Mat<Scalar> out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const Scalar aik = a.at(i, k);
      const Scalar* brow = &b.data[k * b.cols];
      Scalar* orow = &out.data[i * out.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> transpose(const Mat<Scalar>& m) {
  Mat<Scalar> out(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
  return out;
}

// Row-wise softmax with per-row max subtraction.
template <typename Scalar>
Mat<Scalar> row_softmax(const Mat<Scalar>& m) {
  if (m.empty()) throw ShapeError("row_softmax: empty matrix");
  Mat<Scalar> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    Scalar mx = m.at(i, 0);
    for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, m.at(i, j));
    Scalar sum = Scalar(0);
    for (std::size_t j = 0; j < m.cols; ++j) {
      const Scalar e = std::exp(m.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < m.cols; ++j) out.at(i, j) /= sum;
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> scale(const Mat<Scalar>& m, Scalar s) {
  Mat<Scalar> out = m;
  for (auto& v : out.data) v *= s;
  return out;
}

template <typename Scalar>
Mat<Scalar> row(const Mat<Scalar>& m, std::size_t i) {
  Mat<Scalar> out(1, m.cols);
  for (std::size_t j = 0; j < m.cols; ++j) out.at(0, j) = m.at(i, j);
  return out;
}

template <typename Scalar>
void append_row(Mat<Scalar>& m, const Mat<Scalar>& r) {
  if (r.rows != 1 || (m.rows != 0 && r.cols != m.cols))
    throw ShapeError("append_row: expected 1x" + std::to_string(m.cols) + " row");
  if (m.rows == 0) m.cols = r.cols;
  m.data.insert(m.data.end(), r.data.begin(), r.data.end());
  m.rows += 1;
}

template <typename Scalar>
double max_abs_diff(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::abs(double(a.data[i]) - double(b.data[i])));
  return worst;
}

template <typename Scalar>
bool bit_equal(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  return a.same_shape(b) &&
         (a.data.empty() ||
          std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(Scalar)) == 0);
}

template <typename Scalar>
bool all_finite(const Mat<Scalar>& m) {
  for (const Scalar v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

// Seeded uniform matrix in [lo, hi); draws are portable (see rng.hpp).
template <typename Scalar>
Mat<Scalar> random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                          double hi = 1.0) {
  Mat<Scalar> m(rows, cols);
  for (auto& v : m.data) v = static_cast<Scalar>(lo + (hi - lo) * unit_uniform(rng));
  return m;
}

}  // namespace kvshield
