#pragma once

// Brute-force reference computations used only by the tests. Nothing here
// goes through the Kronecker shortcuts, factor routines or quadrature code it
// is compared against.

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense zeros(std::size_t r, std::size_t c) { return Dense(r, std::vector<double>(c, 0.0)); }

inline Dense kron(const Dense& a, const Dense& b) {
  const std::size_t ar = a.size(), ac = a[0].size(), br = b.size(), bc = b[0].size();
  Dense out = zeros(ar * br, ac * bc);
  for (std::size_t i = 0; i < ar; ++i)
    for (std::size_t j = 0; j < ac; ++j)
      for (std::size_t k = 0; k < br; ++k)
        for (std::size_t l = 0; l < bc; ++l) out[i * br + k][j * bc + l] = a[i][j] * b[k][l];
  return out;
}

inline std::vector<double> matvec(const Dense& a, const std::vector<double>& v) {
  std::vector<double> out(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += a[i][j] * v[j];
  return out;
}

inline Dense identity(std::size_t n) {
  Dense d = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 1.0;
  return d;
}

/// log|det A| by LU with partial pivoting.
inline double lu_logabsdet(Dense a) {
  const std::size_t n = a.size();
  double s = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    std::swap(a[p], a[c]);
    if (a[c][c] == 0.0) throw std::runtime_error("singular");
    s += std::log(std::abs(a[c][c]));
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  return s;
}

/// Explicit inverse by Gauss-Jordan elimination.
inline Dense gauss_jordan_inverse(Dense a) {
  const std::size_t n = a.size();
  Dense inv = identity(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    std::swap(a[p], a[c]);
    std::swap(inv[p], inv[c]);
    const double d = a[c][c];
    for (std::size_t k = 0; k < n; ++k) {
      a[c][k] /= d;
      inv[c][k] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c];
      for (std::size_t k = 0; k < n; ++k) {
        a[r][k] -= f * a[c][k];
        inv[r][k] -= f * inv[c][k];
      }
    }
  }
  return inv;
}

inline Dense random_spd(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Dense b = zeros(n, n);
  for (auto& r : b)
    for (auto& v : r) v = nd(rng);
  Dense a = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) a[i][j] += b[i][k] * b[j][k];
      if (i == j) a[i][j] += static_cast<double>(n);
    }
  return a;
}

/// Dense log N(v | 0, C).
inline double mvn_logpdf(const std::vector<double>& v, const Dense& cov) {
  const Dense inv = gauss_jordan_inverse(cov);
  const auto iv = matvec(inv, v);
  double q = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) q += v[i] * iv[i];
  const double n = static_cast<double>(v.size());
  return -0.5 * lu_logabsdet(cov) - 0.5 * q - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

inline double se(double a, double b, double ell, double var) {
  const double r = a - b;
  return var * std::exp(-r * r / (2.0 * ell * ell));
}

}  // namespace oracle
