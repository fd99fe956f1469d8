#include "bsda/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bsda/data.hpp"
#include "bsda/errors.hpp"

namespace bsda {

FusionStrategy FusionStrategy::weighted(double w_user, double w_poi) {
  if (w_user < 0.0 || w_poi < 0.0 || std::abs(w_user + w_poi - 1.0) > 1e-9)
    throw UsageError("weighted_add weights must be non-negative and sum to 1");
  return {FusionKind::weighted_add, w_user, w_poi};
}

FusionStrategy FusionStrategy::parse(const std::string& text) {
  if (text == "maxpool") return {FusionKind::maxpool};
  if (text == "minpool") return {FusionKind::minpool};
  if (text == "multiply") return {FusionKind::multiply};
  if (text == "sum") return {FusionKind::sum};
  if (text.rfind("add:", 0) == 0) {
    const auto colon = text.find(':', 4);
    if (colon != std::string::npos) {
      try {
        return weighted(std::stod(text.substr(4, colon - 4)), std::stod(text.substr(colon + 1)));
      } catch (const std::invalid_argument&) {
      }
    }
  }
  throw UsageError("unknown fusion strategy '" + text + "' (maxpool, minpool, multiply, sum, add:<w_user>:<w_poi>)");
}

std::string FusionStrategy::label() const {
  switch (kind) {
    case FusionKind::maxpool: return "maxpool";
    case FusionKind::minpool: return "minpool";
    case FusionKind::multiply: return "multiply";
    case FusionKind::sum: return "sum";
    case FusionKind::weighted_add: return "add:" + format_double(w_user) + ":" + format_double(w_poi);
  }
  return "?";
}

double FusionStrategy::apply(double a, double b) const {
  switch (kind) {
    case FusionKind::maxpool: return std::max(a, b);
    case FusionKind::minpool: return std::min(a, b);
    case FusionKind::multiply: return a * b;
    case FusionKind::sum: return a + b;
    case FusionKind::weighted_add: return w_user * a + w_poi * b;
  }
  return 0.0;
}

Matrix fuse(const Matrix& user_side, const Matrix& poi_side, const FusionStrategy& strategy) {
  if (user_side.rows() != poi_side.cols() || user_side.cols() != poi_side.rows())
    throw ShapeError("fuse: " + user_side.shape_string() + " vs transpose of " + poi_side.shape_string());
  Matrix out(user_side.rows(), user_side.cols());
  for (std::size_t u = 0; u < out.rows(); ++u)
    for (std::size_t l = 0; l < out.cols(); ++l) out(u, l) = strategy.apply(user_side(u, l), poi_side(l, u));
  return out;
}

std::vector<std::size_t> rank_top_k(std::span<const double> scores, std::size_t k) {
  if (k == 0) throw UsageError("k must be >= 1");
  if (k > scores.size()) throw UsageError("k exceeds the number of candidates");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

std::size_t rank_of(std::span<const double> scores, std::size_t target) {
  if (target >= scores.size()) throw UsageError("rank_of: target outside candidate range");
  const double s = scores[target];
  std::size_t ahead = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] > s || (scores[i] == s && i < target)) ++ahead;
  return ahead + 1;
}

double acc_at_k(const std::vector<std::vector<std::size_t>>& ranked, std::span<const std::size_t> truths, std::size_t k) {
  if (ranked.size() != truths.size()) throw UsageError("ranked lists and truths differ in length");
  if (ranked.empty()) throw UsageError("empty test set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto n = std::min(k, ranked[i].size());
    hits += std::find(ranked[i].begin(), ranked[i].begin() + static_cast<std::ptrdiff_t>(n), truths[i]) !=
            ranked[i].begin() + static_cast<std::ptrdiff_t>(n);
  }
  return static_cast<double>(hits) / static_cast<double>(ranked.size());
}

double mrr(const std::vector<std::vector<std::size_t>>& ranked, std::span<const std::size_t> truths) {
  if (ranked.size() != truths.size()) throw UsageError("ranked lists and truths differ in length");
  if (ranked.empty()) throw UsageError("empty test set");
  double total = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto it = std::find(ranked[i].begin(), ranked[i].end(), truths[i]);
    if (it == ranked[i].end()) throw UsageError("mrr: truth missing from its ranking");
    total += 1.0 / static_cast<double>(it - ranked[i].begin() + 1);
  }
  return total / static_cast<double>(ranked.size());
}

double acc_from_ranks(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw UsageError("empty test set");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double mrr_from_ranks(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw UsageError("empty test set");
  double total = 0.0;
  for (auto r : ranks) total += 1.0 / static_cast<double>(r);
  return total / static_cast<double>(ranks.size());
}

}  // namespace bsda
