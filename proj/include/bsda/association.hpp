#pragma once

#include <filesystem>
#include <string>

#include "bsda/data.hpp"
#include "bsda/matrix.hpp"

namespace bsda {

enum class SimilarityKind { user, poi };

/// Square similarity matrix with entries in [0, 1] and unit diagonal.
struct SimilarityMatrix {
  SimilarityKind kind = SimilarityKind::user;
  Matrix values;

  std::size_t size() const { return values.rows(); }
};

enum class UserSimilarityMode {
  location_sets,  // |L_m & L_n| / |L_m| over all train locations
  same_day,       // numerator counts only locations both users visited on a common day
};

enum class PoiNormalization { global_max, row_max };

struct AssociationOptions {
  UserSimilarityMode user_mode = UserSimilarityMode::location_sets;
  PoiNormalization poi_normalization = PoiNormalization::global_max;
  std::size_t top_k = 0;  // keep each row's k largest off-diagonal entries; 0 keeps all
};

UserSimilarityMode parse_user_similarity_mode(const std::string& s);
PoiNormalization parse_poi_normalization(const std::string& s);

/// Corr_U from train events. Not symmetric in general.
SimilarityMatrix user_similarity(const Dataset& dataset, UserSimilarityMode mode = UserSimilarityMode::location_sets);

/// Raw counts: entry (m, n), m != n, is the number of UTC days on which some
/// user visited both POIs during training. Diagonal is zero.
Matrix poi_shared_visitor_days(const Dataset& dataset);

/// Corr_L: shared-visitor-day counts normalized into [0, 1], diagonal 1.
SimilarityMatrix poi_similarity(const Dataset& dataset, PoiNormalization norm = PoiNormalization::global_max);

/// Zeroes all but the k largest off-diagonal entries of each row (ties keep the lower index).
void truncate_top_k(SimilarityMatrix& sim, std::size_t k);

SimilarityMatrix identity_similarity(SimilarityKind kind, std::size_t n);

/// Corr * S with each output row rescaled to sum 1.
Matrix adjust_scores(const SimilarityMatrix& corr, const Matrix& scores);
/// Eq. shapes: Corr_U (M x M) * S_U (M x N).
Matrix adjust_user_scores(const SimilarityMatrix& corr_user, const Matrix& user_scores);
/// Corr_L (N x N) * S_L (N x M).
Matrix adjust_poi_scores(const SimilarityMatrix& corr_poi, const Matrix& poi_scores);

/// Sparse triplet text: "# bsda-similarity kind=<user|poi> size=<n>" then "row\tcol\tvalue" per nonzero.
void write_similarity(const std::filesystem::path& path, const SimilarityMatrix& sim);
SimilarityMatrix read_similarity(const std::filesystem::path& path);

}  // namespace bsda
