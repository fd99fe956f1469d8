#pragma once

#include <span>
#include <string>
#include <vector>

#include "bsda/matrix.hpp"

namespace bsda {

enum class FusionKind {
  maxpool,       // elementwise max
  weighted_add,  // w_user * user side + w_poi * POI side
  multiply,
  minpool,
  sum,  // plain sum, the "maxpooling(A + B)" reading
};

struct FusionStrategy {
  FusionKind kind = FusionKind::maxpool;
  double w_user = 0.5;
  double w_poi = 0.5;

  /// "maxpool", "minpool", "multiply", "sum" or "add:<w_user>:<w_poi>".
  static FusionStrategy parse(const std::string& text);
  static FusionStrategy weighted(double w_user, double w_poi);
  std::string label() const;

  double apply(double user_side, double poi_side) const;
};

/// S_F (M x N) from the user-side matrix (M x N) and the POI-side matrix (N x M).
Matrix fuse(const Matrix& user_side, const Matrix& poi_side, const FusionStrategy& strategy);

/// Indices of the k largest scores, descending; ties go to the lower index.
std::vector<std::size_t> rank_top_k(std::span<const double> scores, std::size_t k);

/// 1-based position of `target` in the full ranking implied by rank_top_k.
std::size_t rank_of(std::span<const double> scores, std::size_t target);

/// Share of instances whose truth is within the first k entries of its list.
double acc_at_k(const std::vector<std::vector<std::size_t>>& ranked, std::span<const std::size_t> truths, std::size_t k);

/// Mean of 1 / position of the truth; every truth must appear in its list.
double mrr(const std::vector<std::vector<std::size_t>>& ranked, std::span<const std::size_t> truths);

double acc_from_ranks(std::span<const std::size_t> ranks, std::size_t k);
double mrr_from_ranks(std::span<const std::size_t> ranks);

}  // namespace bsda
