#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kstpp {

/// Raised when a Cholesky pivot is not strictly positive.
class NotPositiveDefinite : public std::runtime_error {
 public:
  NotPositiveDefinite(std::size_t pivot, const std::string& context = {})
      : std::runtime_error(message(pivot, context)), pivot_(pivot) {}

  [[nodiscard]] std::size_t pivot() const noexcept { return pivot_; }

 private:
  static std::string message(std::size_t pivot, const std::string& context) {
    std::string msg = "matrix is not positive definite (pivot " + std::to_string(pivot) + ")";
    if (!context.empty()) msg += ": " + context;
    return msg;
  }
  std::size_t pivot_;
};

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw std::invalid_argument("Matrix: data length does not match shape");
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] std::span<double> data() noexcept { return data_; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  [[nodiscard]] std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }

  [[nodiscard]] Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: dimension mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

using Shape3 = std::array<std::size_t, 3>;

/// Order-3 dense tensor, last index fastest.
///
/// Two-dimensional quantities are stored with a leading mode of size 1, so
/// a single type covers both the spatial background grid and the
/// spatiotemporal influence grid.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(Shape3 shape, double fill = 0.0)
      : shape_(shape), data_(shape[0] * shape[1] * shape[2], fill) {}
  Tensor3(Shape3 shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_[0] * shape_[1] * shape_[2])
      throw std::invalid_argument("Tensor3: data length does not match shape");
  }

  [[nodiscard]] const Shape3& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::vector<double>& storage() noexcept { return data_; }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  Shape3 shape_{0, 0, 0};
  std::vector<double> data_;
};

/// Contract `m` against `t` along `mode`: out[.., r, ..] = sum_i m(r, i) t[.., i, ..].
inline Tensor3 mode_product(const Tensor3& t, const Matrix& m, std::size_t mode) {
  if (mode > 2) throw std::invalid_argument("mode_product: mode must be 0, 1 or 2");
  const auto [s0, s1, s2] = t.shape();
  if (m.cols() != t.shape()[mode])
    throw std::invalid_argument("mode_product: matrix has " + std::to_string(m.cols()) +
                                " columns, tensor mode " + std::to_string(mode) + " has size " +
                                std::to_string(t.shape()[mode]));
  Shape3 out_shape = t.shape();
  out_shape[mode] = m.rows();
  Tensor3 out(out_shape);
  const auto src = t.data();
  auto dst = out.data();
  const std::size_t r_count = m.rows();

  if (mode == 0) {
    const std::size_t slab = s1 * s2;
    for (std::size_t r = 0; r < r_count; ++r) {
      double* o = dst.data() + r * slab;
      for (std::size_t i = 0; i < s0; ++i) {
        const double w = m(r, i);
        if (w == 0.0) continue;
        const double* s = src.data() + i * slab;
        for (std::size_t q = 0; q < slab; ++q) o[q] += w * s[q];
      }
    }
  } else if (mode == 1) {
    for (std::size_t i = 0; i < s0; ++i) {
      const double* s = src.data() + i * s1 * s2;
      double* o = dst.data() + i * r_count * s2;
      for (std::size_t r = 0; r < r_count; ++r) {
        double* orow = o + r * s2;
        for (std::size_t j = 0; j < s1; ++j) {
          const double w = m(r, j);
          if (w == 0.0) continue;
          const double* srow = s + j * s2;
          for (std::size_t k = 0; k < s2; ++k) orow[k] += w * srow[k];
        }
      }
    }
  } else {
    const std::size_t lines = s0 * s1;
    for (std::size_t l = 0; l < lines; ++l) {
      const double* s = src.data() + l * s2;
      double* o = dst.data() + l * r_count;
      for (std::size_t r = 0; r < r_count; ++r) {
        const auto mrow = m.row(r);
        double acc = 0.0;
        for (std::size_t k = 0; k < s2; ++k) acc += mrow[k] * s[k];
        o[r] = acc;
      }
    }
  }
  return out;
}

/// out(p, q) = sum over all indices except `mode` of a[.., p, ..] * b[.., q, ..].
///
/// `a` and `b` must agree on the two modes other than `mode`. This is the
/// unfolding product A_(mode) B_(mode)^T used by the Gram-matrix adjoints.
inline Matrix mode_outer(const Tensor3& a, const Tensor3& b, std::size_t mode) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  for (std::size_t d = 0; d < 3; ++d)
    if (d != mode && sa[d] != sb[d]) throw std::invalid_argument("mode_outer: shape mismatch");
  Matrix out(sa[mode], sb[mode]);
  if (mode == 0) {
    const std::size_t slab = sa[1] * sa[2];
    for (std::size_t p = 0; p < sa[0]; ++p) {
      const double* ap = a.data().data() + p * slab;
      for (std::size_t q = 0; q < sb[0]; ++q) {
        const double* bq = b.data().data() + q * slab;
        double acc = 0.0;
        for (std::size_t s = 0; s < slab; ++s) acc += ap[s] * bq[s];
        out(p, q) = acc;
      }
    }
  } else if (mode == 1) {
    for (std::size_t i = 0; i < sa[0]; ++i)
      for (std::size_t p = 0; p < sa[1]; ++p)
        for (std::size_t q = 0; q < sb[1]; ++q) {
          double acc = 0.0;
          for (std::size_t k = 0; k < sa[2]; ++k) acc += a(i, p, k) * b(i, q, k);
          out(p, q) += acc;
        }
  } else {
    const std::size_t lines = sa[0] * sa[1];
    for (std::size_t l = 0; l < lines; ++l) {
      const double* al = a.data().data() + l * sa[2];
      const double* bl = b.data().data() + l * sb[2];
      for (std::size_t p = 0; p < sa[2]; ++p)
        for (std::size_t q = 0; q < sb[2]; ++q) out(p, q) += al[p] * bl[q];
    }
  }
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

/// Lower-triangular Cholesky factor L with L L^T = A.
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  explicit CholeskyFactor(Matrix lower) : lower_(std::move(lower)) {}

  [[nodiscard]] std::size_t size() const noexcept { return lower_.rows(); }
  [[nodiscard]] const Matrix& lower() const noexcept { return lower_; }

 private:
  Matrix lower_;
};

inline CholeskyFactor cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("cholesky: matrix is not square");
  const std::size_t n = a.rows();
  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-12 * scale)
        throw std::invalid_argument("cholesky: matrix is not symmetric");

  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) throw NotPositiveDefinite(j);
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return CholeskyFactor(std::move(l));
}

/// log|A| = 2 sum log L_ii.
inline double logdet(const CholeskyFactor& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += std::log(f.lower()(i, i));
  return 2.0 * s;
}

/// Solve A X = rhs for X given the factor of A.
inline Matrix solve(const CholeskyFactor& f, const Matrix& rhs) {
  const std::size_t n = f.size();
  if (rhs.rows() != n) throw std::invalid_argument("solve: rhs rows do not match factor size");
  const Matrix& l = f.lower();
  Matrix x = rhs;
  const std::size_t nc = rhs.cols();
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x(k, c);
      x(ii, c) = s / l(ii, ii);
    }
  }
  return x;
}

inline Matrix inverse(const CholeskyFactor& f) { return solve(f, Matrix::identity(f.size())); }

/// t x_0 A0^{-1} x_1 A1^{-1} x_2 A2^{-1}.
inline Tensor3 kron_solve(const Tensor3& t, const CholeskyFactor& f0, const CholeskyFactor& f1,
                          const CholeskyFactor& f2) {
  const Shape3& s = t.shape();
  if (f0.size() != s[0] || f1.size() != s[1] || f2.size() != s[2])
    throw std::invalid_argument("kron_solve: factor sizes do not match tensor shape");
  Tensor3 out = mode_product(t, inverse(f0), 0);
  out = mode_product(out, inverse(f1), 1);
  return mode_product(out, inverse(f2), 2);
}

/// vec(t)^T (A0 (x) A1 (x) A2)^{-1} vec(t) without forming the Kronecker product.
inline double kron_quadratic_form(const Tensor3& t, const CholeskyFactor& f0, const CholeskyFactor& f1,
                                  const CholeskyFactor& f2) {
  const Tensor3 a = kron_solve(t, f0, f1, f2);
  return dot(t.data(), a.data());
}

}  // namespace kstpp
