#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bsda/data.hpp"

namespace bsda {

/// Parameters of the planted-structure generator.
///
/// Every non-noise visit of a regular user comes from a private pool of
/// `pool_size` POIs. Users in a clone pair share one pool: each visit is taken
/// from it with probability `pool_overlap`, is noise with probability
/// `noise_rate`, and otherwise comes from a private pool. Within a pool, a
/// user follows its own cyclic order with probability `sequence_strength`.
/// Each clone lists the shared pool in the opposite order of its partner, and
/// the last `deferred_pool` POIs of that order are only visited after the
/// user's train/test cut, so each clone's test-time novelties are POIs its
/// partner already visits during training.
struct SyntheticSpec {
  std::size_t users = 40;
  std::size_t pois = 30;
  std::size_t events_per_user = 120;
  double clone_fraction = 0.3;
  double pool_overlap = 0.9;
  double noise_rate = 0.1;
  std::size_t pool_size = 6;
  std::size_t deferred_pool = 2;
  double sequence_strength = 0.7;
  double split_ratio = 0.8;
  std::size_t window = 20;
  int slots_per_day = 24;
  Timestamp start_time = 1262304000;  // 2010-01-01T00:00:00Z
  double center_lat = 30.27;
  double center_lon = -97.74;
  double spread_deg = 0.05;

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

enum class WeekProfile { flat, weekday, weekend };

/// Ground truth planted by the generator.
struct SyntheticTruth {
  std::vector<std::pair<UserIndex, UserIndex>> clone_pairs;
  std::vector<int> peak_hour;             // per POI
  std::vector<WeekProfile> week_profile;  // per POI
  std::vector<std::vector<PoiIndex>> pool;  // per user, in that user's cyclic order
};

struct SyntheticData {
  Dataset dataset;
  SyntheticTruth truth;
};

/// Throws UsageError for infeasible specs.
void validate(const SyntheticSpec& spec);

SyntheticData generate_synthetic_with_truth(const SyntheticSpec& spec, std::uint64_t seed);
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Flat key=value spec file; unknown keys are an error.
SyntheticSpec read_synthetic_spec(const std::filesystem::path& path);
void apply_synthetic_key(SyntheticSpec& spec, const std::string& key, const std::string& value);
std::vector<std::pair<std::string, std::string>> synthetic_spec_entries(const SyntheticSpec& spec);

}  // namespace bsda
