// Soft dynamic time warping with squared-Euclidean ground cost, plus the
// hard-DTW and path-enumeration oracles used to validate it.
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "tipcast/matrix.hpp"

namespace tipcast::sdtw {

/// Stand-in for +inf on the DP boundary; keeps gradients free of inf - inf.
inline constexpr double kSentinel = 1e300;

/// -gamma * log(exp(-a/gamma) + exp(-b/gamma) + exp(-c/gamma)).
double softmin3(double a, double b, double c, double gamma);

/// Pairwise squared distances between the rows of X [N x d] and Y [M x d].
Matrix cost_matrix(const Matrix& x, const Matrix& y);

struct Forward {
  double loss = 0.0;
  Matrix cost;  // N x M
  Matrix r;     // (N + 1) x (M + 1), row/column 0 hold the boundary
};

Forward sdtw_forward(const Matrix& x, const Matrix& y, double gamma);

/// Expected alignment E [N x M] (soft path occupation) from a forward pass.
Matrix expected_alignment(const Forward& fw, double gamma);

/// d loss / d X, given the forward pass for (X, Y).
Matrix sdtw_grad(const Matrix& x, const Matrix& y, const Forward& fw, double gamma);

double hard_dtw(const Matrix& x, const Matrix& y);

using Path = std::vector<std::pair<std::size_t, std::size_t>>;

/// Every monotone path from (0, 0) to (N-1, M-1) using right, down and
/// diagonal steps. Guarded to N, M <= 7.
std::vector<Path> enumerate_paths(std::size_t n, std::size_t m);

double path_cost(const Matrix& cost, const Path& path);

/// Batch objective: mean over examples of sdtw(pred_b, target_b) / (N + M).
/// When grads is non-null it receives d objective / d pred_b.
double batch_loss(const std::vector<Matrix>& preds, const std::vector<Matrix>& targets,
                  double gamma, std::vector<Matrix>* grads = nullptr, std::size_t workers = 1);

}  // namespace tipcast::sdtw
