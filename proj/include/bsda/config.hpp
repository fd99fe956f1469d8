#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bsda/evaluation.hpp"

namespace bsda {

/// Flat run configuration. Precedence: flags over file over defaults.
/// Unknown keys are rejected.
struct RunConfig {
  // data
  std::string dataset;              // dataset directory
  std::string input;                // raw check-in file for ingest
  std::string format = "gowalla";   // gowalla | foursquare
  std::size_t min_user_records = 100;
  std::size_t min_poi_records = 0;
  double split_ratio = 0.8;
  std::size_t window = 20;
  int slots_per_day = 24;
  std::string synth_spec;           // synthetic spec file, empty for defaults

  // models
  std::size_t dim = 10;
  std::size_t slot_dim = 4;
  double alpha = 0.1;
  double beta = 100.0;
  std::size_t context = 20;

  // training
  std::string optimizer = "adam";
  double learning_rate = 1e-3;
  std::size_t user_epochs = 150;
  std::size_t poi_epochs = 150;
  std::size_t batch_size = 4;

  // association
  std::string user_similarity = "location_sets";
  std::string poi_normalization = "global_max";
  std::size_t top_k = 0;

  // evaluation
  std::string variant = "full";  // a variant name or "all"
  std::string fusion = "maxpool";
  std::string user_scores = "stepwise";
  std::string score_output = "probability";
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> ks{1, 5, 10};

  // artifacts
  std::string out;
};

/// key = value lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path);

void apply_config_key(RunConfig& config, const std::string& key, const std::string& value);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// All keys with their current values, in declaration order.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config);

/// FNV-1a 64 over the canonical "key=value\n" listing, output location excluded.
std::uint64_t config_hash(const RunConfig& config);
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

ModelConfig model_config(const RunConfig& config);
EvalOptions eval_options(const RunConfig& config);
DatasetOptions dataset_options(const RunConfig& config);

}  // namespace bsda
