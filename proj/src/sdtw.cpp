#include "tipcast/sdtw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tipcast/error.hpp"
#include "tipcast/kernels.hpp"
#include "tipcast/parallel.hpp"

namespace tipcast::sdtw {

namespace {

void check_pair(const Matrix& x, const Matrix& y) {
  if (x.rows == 0 || y.rows == 0) throw InvalidArgument("soft-DTW needs non-empty sequences");
  if (x.cols != y.cols) {
    throw ShapeError("soft-DTW feature mismatch: [" + std::to_string(x.rows) + " x " +
                     std::to_string(x.cols) + "] vs [" + std::to_string(y.rows) + " x " +
                     std::to_string(y.cols) + "]");
  }
}

void check_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be positive");
}

}  // namespace

double softmin3(double a, double b, double c, double gamma) {
  const double m = std::min({a, b, c});
  if (m >= kSentinel || std::isinf(m)) return m;
  const double s = std::exp(-(a - m) / gamma) + std::exp(-(b - m) / gamma) + std::exp(-(c - m) / gamma);
  return m - gamma * std::log(s);
}

Matrix cost_matrix(const Matrix& x, const Matrix& y) {
  check_pair(x, y);
  Matrix d(x.rows, y.rows);
  kernels::sq_dist(x.data.data(), y.data.data(), d.data.data(), x.rows, y.rows, x.cols);
  return d;
}

Forward sdtw_forward(const Matrix& x, const Matrix& y, double gamma) {
  check_gamma(gamma);
  Forward fw;
  fw.cost = cost_matrix(x, y);
  const std::size_t n = x.rows, m = y.rows;
  fw.r = Matrix(n + 1, m + 1, kSentinel);
  fw.r(0, 0) = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      fw.r(i, j) = fw.cost(i - 1, j - 1) +
                   softmin3(fw.r(i - 1, j), fw.r(i, j - 1), fw.r(i - 1, j - 1), gamma);
    }
  }
  fw.loss = fw.r(n, m);
  return fw;
}

Matrix expected_alignment(const Forward& fw, double gamma) {
  check_gamma(gamma);
  const std::size_t n = fw.cost.rows, m = fw.cost.cols;
  // Padded copies: index (i, j) for 1 <= i <= n, 1 <= j <= m mirrors fw.r.
  Matrix r(n + 2, m + 2, -kSentinel);
  Matrix d(n + 2, m + 2, 0.0);
  Matrix e(n + 2, m + 2, 0.0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      r(i, j) = fw.r(i, j);
      d(i, j) = fw.cost(i - 1, j - 1);
    }
  }
  r(n + 1, m + 1) = fw.r(n, m);
  e(n + 1, m + 1) = 1.0;
  for (std::size_t i = n; i >= 1; --i) {
    for (std::size_t j = m; j >= 1; --j) {
      const double a = std::exp((r(i + 1, j) - r(i, j) - d(i + 1, j)) / gamma);
      const double b = std::exp((r(i, j + 1) - r(i, j) - d(i, j + 1)) / gamma);
      const double c = std::exp((r(i + 1, j + 1) - r(i, j) - d(i + 1, j + 1)) / gamma);
      e(i, j) = e(i + 1, j) * a + e(i, j + 1) * b + e(i + 1, j + 1) * c;
    }
  }
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out(i, j) = e(i + 1, j + 1);
  }
  return out;
}

Matrix sdtw_grad(const Matrix& x, const Matrix& y, const Forward& fw, double gamma) {
  check_pair(x, y);
  const Matrix e = expected_alignment(fw, gamma);
  const std::size_t d = x.cols;
  Matrix g(x.rows, d);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double* gi = &g(i, 0);
    const double* xi = x.row(i).data();
    for (std::size_t j = 0; j < y.rows; ++j) {
      const double w = 2.0 * e(i, j);
      if (w == 0.0) continue;
      const double* yj = y.row(j).data();
      for (std::size_t k = 0; k < d; ++k) gi[k] += w * (xi[k] - yj[k]);
    }
  }
  return g;
}

double hard_dtw(const Matrix& x, const Matrix& y) {
  const Matrix c = cost_matrix(x, y);
  const std::size_t n = x.rows, m = y.rows;
  Matrix r(n + 1, m + 1, std::numeric_limits<double>::infinity());
  r(0, 0) = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      r(i, j) = c(i - 1, j - 1) + std::min({r(i - 1, j), r(i, j - 1), r(i - 1, j - 1)});
    }
  }
  return r(n, m);
}

std::vector<Path> enumerate_paths(std::size_t n, std::size_t m) {
  if (n == 0 || m == 0) throw InvalidArgument("enumerate_paths needs positive sizes");
  if (n > 7 || m > 7) throw InvalidArgument("enumerate_paths is limited to 7 x 7");
  std::vector<Path> out;
  Path cur{{0, 0}};
  auto walk = [&](auto&& self, std::size_t i, std::size_t j) -> void {
    if (i == n - 1 && j == m - 1) {
      out.push_back(cur);
      return;
    }
    const std::pair<std::size_t, std::size_t> steps[] = {{i + 1, j}, {i, j + 1}, {i + 1, j + 1}};
    for (const auto& [a, b] : steps) {
      if (a >= n || b >= m) continue;
      cur.emplace_back(a, b);
      self(self, a, b);
      cur.pop_back();
    }
  };
  walk(walk, 0, 0);
  return out;
}

double path_cost(const Matrix& cost, const Path& path) {
  double s = 0.0;
  for (const auto& [i, j] : path) s += cost(i, j);
  return s;
}

double batch_loss(const std::vector<Matrix>& preds, const std::vector<Matrix>& targets,
                  double gamma, std::vector<Matrix>* grads, std::size_t workers) {
  if (preds.size() != targets.size()) throw ShapeError("soft-DTW batch size mismatch");
  if (preds.empty()) throw InvalidArgument("soft-DTW batch is empty");
  const std::size_t b = preds.size();
  std::vector<double> losses(b);
  if (grads != nullptr) grads->assign(b, Matrix());
  parallel_for(b, workers, [&](std::size_t k) {
    const Forward fw = sdtw_forward(preds[k], targets[k], gamma);
    const double norm = static_cast<double>(preds[k].rows + targets[k].rows);
    losses[k] = fw.loss / norm;
    if (grads != nullptr) {
      Matrix g = sdtw_grad(preds[k], targets[k], fw, gamma);
      const double s = 1.0 / (norm * static_cast<double>(b));
      for (double& v : g.data) v *= s;
      (*grads)[k] = std::move(g);
    }
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(b);
}

}  // namespace tipcast::sdtw
