#pragma once

#include <span>
#include <string>
#include <vector>

#include "bsda/data.hpp"
#include "bsda/matrix.hpp"

namespace bsda {

enum class Statistic { visit_counts, temporal_density, user_sim_vs_common, poi_sim_vs_common };

Statistic parse_statistic(const std::string& name);
std::string to_string(Statistic s);
const std::vector<Statistic>& all_statistics();

/// Entry (l, i): users with at least thresholds[i] visits to POI l (all records).
Matrix visit_count_histogram(const Dataset& dataset, const std::vector<std::size_t>& thresholds);

struct TemporalDensity {
  Matrix joint;    // N x (7 * S), cell weekday * S + slot
  Matrix slot;     // N x S
  Matrix weekday;  // N x 7
};

/// Visit densities per POI over all records; each non-empty row sums to 1.
TemporalDensity temporal_density(const Dataset& dataset);

/// One (similarity, common count) sample for an ordered user pair or unordered POI pair.
struct SimilaritySample {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  double similarity = 0.0;
  std::size_t common = 0;
};

/// tau(m, n) against the number of common train POIs, over ordered pairs m != n.
std::vector<SimilaritySample> user_sim_vs_common(const Dataset& dataset);
/// Corr_L(m, n) against the number of common train visitors, over pairs m < n.
std::vector<SimilaritySample> poi_sim_vs_common(const Dataset& dataset);

/// Spearman rank correlation with average ranks for ties. Zero-variance input gives 0.
double spearman(std::span<const double> x, std::span<const double> y);

/// CSV text for one statistic, raw ids in identifier columns.
std::string statistic_csv(const Dataset& dataset, Statistic which);

}  // namespace bsda
