#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bsda/association.hpp"
#include "bsda/data.hpp"
#include "bsda/fusion.hpp"
#include "bsda/poi_net.hpp"
#include "bsda/training.hpp"
#include "bsda/user_net.hpp"

namespace bsda {

enum class Variant {
  full,                // fuse(adjusted S_U, adjusted S_L)
  no_cross_poi,        // fuse(adjusted S_U, S_L)
  no_cross_user,       // fuse(S_U, adjusted S_L)
  no_user_prediction,  // adjusted S_U alone
  user_net_only,       // S_U alone
  poi_net_only,        // next-visitor task from adjusted S_L
};

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);
const std::vector<Variant>& all_variants();

/// How S_U rows are produced for test instances.
enum class UserScoreMode {
  stepwise,   // every row re-predicted from history strictly before the instance
  train_end,  // one row per user from its train history
};

UserScoreMode parse_user_score_mode(const std::string& s);
std::string to_string(UserScoreMode m);

struct ModelConfig {
  UserNetConfig user;
  PoiNetConfig poi;
  TrainConfig user_train;
  TrainConfig poi_train;
  AssociationOptions association;
};

struct EvalOptions {
  std::vector<std::size_t> ks{1, 5, 10};
  UserScoreMode user_scores = UserScoreMode::stepwise;
  ScoreOutput output = ScoreOutput::probability;
};

/// Everything a variant needs. Fields are public so tests can substitute
/// degenerate matrices.
struct Components {
  UserNet user_net;
  PoiNet poi_net;
  SimilarityMatrix corr_user;
  SimilarityMatrix corr_poi;
  Matrix poi_scores;  // S_L, static at the end of each POI's train history
  TrainLog user_log;
  TrainLog poi_log;
};

Components assemble_components(const Dataset& dataset, UserNet user_net, PoiNet poi_net,
                               const AssociationOptions& association, ScoreOutput output = ScoreOutput::probability);
Components train_components(const Dataset& dataset, const ModelConfig& config, std::uint64_t seed,
                            ScoreOutput output = ScoreOutput::probability);

struct MetricSummary {
  std::vector<std::size_t> ks;
  std::vector<double> acc;
  double mrr = 0.0;
  std::size_t instances = 0;
};

struct UserBreakdown {
  std::uint32_t entity = 0;  // user (or POI for poi_net_only)
  std::size_t instances = 0;
  double acc1 = 0.0;
  double mrr = 0.0;
};

/// One evaluated test instance.
struct InstanceRank {
  std::uint32_t subject = 0;  // user (POI for poi_net_only)
  std::uint32_t target = 0;
  std::size_t rank = 0;
  bool novel = false;  // target absent from the subject's train history
};

struct SeedResult {
  std::uint64_t seed = 0;
  MetricSummary overall;
  MetricSummary novel;
  std::vector<UserBreakdown> per_entity;
};

struct EvalReport {
  std::string label;
  Variant variant = Variant::full;
  FusionStrategy fusion;
  std::vector<std::uint64_t> seeds;
  MetricSummary overall;  // means over seeds
  MetricSummary novel;
  std::vector<SeedResult> per_seed;
};

std::vector<InstanceRank> rank_instances(const Dataset& dataset, const Components& components, Variant variant,
                                         const FusionStrategy& fusion, const EvalOptions& options = {});

MetricSummary summarize(std::span<const InstanceRank> ranks, const std::vector<std::size_t>& ks);
SeedResult evaluate_seed(const Dataset& dataset, const Components& components, Variant variant,
                         const FusionStrategy& fusion, const EvalOptions& options, std::uint64_t seed);

/// Averages per-seed results into a report.
EvalReport make_report(Variant variant, const FusionStrategy& fusion, std::vector<SeedResult> per_seed);

EvalReport run_variant(const Dataset& dataset, Variant variant, const FusionStrategy& fusion,
                       const std::vector<std::uint64_t>& seeds, const ModelConfig& config,
                       const EvalOptions& options = {});

struct Arm {
  Variant variant;
  FusionStrategy fusion;
};

/// Trains once per seed and evaluates every arm on the same weights.
std::vector<EvalReport> run_battery(const Dataset& dataset, const std::vector<Arm>& arms,
                                    const std::vector<std::uint64_t>& seeds, const ModelConfig& config,
                                    const EvalOptions& options = {});

/// The variant ablation plus the fusion-strategy comparison.
std::vector<Arm> ablation_arms();

std::string report_to_json(const std::vector<EvalReport>& reports, int indent = 2);
std::string report_to_text(const std::vector<EvalReport>& reports);

/// Per-case candidate lists: top users/POIs and nearest neighbours, raw ids.
std::string case_report_json(const Dataset& dataset, const Components& components, UserIndex user, PoiIndex poi,
                             std::size_t top = 5, const EvalOptions& options = {});

}  // namespace bsda
