#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace spdelab {

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(6.283185307179586476925286766559);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Sample summary with unbiased variance and standard error of the mean.
struct Summary {
  long n = 0;
  double mean = 0.0;
  double var = 0.0;
  double se = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

/// Variance (and everything downstream of it) needs two samples.
inline bool variance_defined(const Summary& s) { return s.n >= 2; }

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.n = static_cast<long>(xs.size());
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n < 2) return s;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : xs) {
    double d = x - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  double n = static_cast<double>(s.n);
  s.var = m2 / (n - 1.0);
  s.se = std::sqrt(s.var / n);
  if (m2 > 0.0) {
    double sd = std::sqrt(m2 / n);
    s.skewness = (m3 / n) / (sd * sd * sd);
    s.excess_kurtosis = (m4 / n) / ((m2 / n) * (m2 / n)) - 3.0;
  }
  return s;
}

/// Ordinary least squares y = a + b*x; returns (intercept, slope, slope_se).
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_line: need two or more paired points");
  double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double r = y[i] - f.intercept - f.slope * x[i];
    rss += r * r;
  }
  if (x.size() > 2) f.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
  return f;
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
/// Row-major square input; returns eigenvalues in ascending order.
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n) {
  auto at = [&](int i, int j) -> double& { return a[static_cast<size_t>(i * n + j)]; };
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-28) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(at(p, q)) < 1e-30) continue;
        double theta = 0.5 * std::atan2(2.0 * at(p, q), at(q, q) - at(p, p));
        double c = std::cos(theta), s = std::sin(theta);
        for (int k = 0; k < n; ++k) {
          double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) ev[static_cast<size_t>(i)] = at(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

}  // namespace spdelab
