#include "bsda/evaluation.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "bsda/errors.hpp"

namespace bsda {

Variant parse_variant(const std::string& name) {
  for (auto v : all_variants())
    if (to_string(v) == name) return v;
  throw UsageError("unknown variant '" + name +
                   "' (full, no_cross_poi, no_cross_user, no_user_prediction, user_net_only, poi_net_only)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_cross_poi: return "no_cross_poi";
    case Variant::no_cross_user: return "no_cross_user";
    case Variant::no_user_prediction: return "no_user_prediction";
    case Variant::user_net_only: return "user_net_only";
    case Variant::poi_net_only: return "poi_net_only";
  }
  return "?";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::full,          Variant::no_cross_poi,  Variant::no_cross_user,
                                      Variant::no_user_prediction, Variant::user_net_only, Variant::poi_net_only};
  return v;
}

UserScoreMode parse_user_score_mode(const std::string& s) {
  if (s == "stepwise") return UserScoreMode::stepwise;
  if (s == "train_end") return UserScoreMode::train_end;
  throw UsageError("unknown user score mode '" + s + "' (expected stepwise or train_end)");
}

std::string to_string(UserScoreMode m) { return m == UserScoreMode::stepwise ? "stepwise" : "train_end"; }

Components assemble_components(const Dataset& dataset, UserNet user_net, PoiNet poi_net,
                               const AssociationOptions& association, ScoreOutput output) {
  auto corr_user = user_similarity(dataset, association.user_mode);
  auto corr_poi = poi_similarity(dataset, association.poi_normalization);
  truncate_top_k(corr_user, association.top_k);
  truncate_top_k(corr_poi, association.top_k);
  auto poi_scores = predict_poi_scores(dataset, poi_net, output);
  return Components{std::move(user_net), std::move(poi_net), std::move(corr_user), std::move(corr_poi),
                    std::move(poi_scores), {}, {}};
}

Components train_components(const Dataset& dataset, const ModelConfig& config, std::uint64_t seed,
                            ScoreOutput output) {
  UserNet user_net(dataset.num_users(), dataset.num_pois(), config.user, seed);
  auto user_train = config.user_train;
  user_train.seed = seed;
  auto user_log = train_user_net(user_net, dataset, user_train);

  auto poi_cfg = config.poi;
  poi_cfg.slots_per_day = dataset.options().slots_per_day;
  PoiNet poi_net(dataset.num_users(), dataset.num_pois(), poi_cfg, seed);
  auto poi_train = config.poi_train;
  poi_train.seed = seed;
  auto poi_log = train_poi_net(poi_net, dataset, poi_train);

  auto c = assemble_components(dataset, std::move(user_net), std::move(poi_net), config.association, output);
  c.user_log = std::move(user_log);
  c.poi_log = std::move(poi_log);
  return c;
}

namespace {

// Memoized S_U rows keyed by (user, number of leading trajectory events used).
class UserRowCache {
 public:
  UserRowCache(const Dataset& ds, const UserNet& net, ScoreOutput output)
      : ds_(ds), net_(net), output_(output), rows_(ds.num_users()) {}

  const std::vector<double>& row(UserIndex u, std::size_t prefix) {
    auto& slot = rows_[u];
    auto it = slot.find(prefix);
    if (it == slot.end()) it = slot.emplace(prefix, net_.scores(ds_.trajectory(u).first(prefix), u, output_)).first;
    return it->second;
  }

  std::size_t prefix_before(UserIndex u, Timestamp cut) const {
    const auto traj = ds_.trajectory(u);
    return static_cast<std::size_t>(
        std::lower_bound(traj.begin(), traj.end(), cut, [](const CheckIn& c, Timestamp t) { return c.timestamp < t; }) -
        traj.begin());
  }

 private:
  const Dataset& ds_;
  const UserNet& net_;
  ScoreOutput output_;
  std::vector<std::unordered_map<std::size_t, std::vector<double>>> rows_;
};

// Produces the final location-task score row for one test instance.
class InstanceScorer {
 public:
  InstanceScorer(const Dataset& ds, const Components& c, const EvalOptions& opt)
      : ds_(ds), c_(c), opt_(opt), cache_(ds, c.user_net, opt.output) {
    poi_adjusted_ = adjust_poi_scores(c.corr_poi, c.poi_scores);
    if (opt.user_scores == UserScoreMode::train_end) {
      user_end_ = predict_user_scores_train_end(ds, c.user_net, opt.output);
      user_end_adjusted_ = adjust_user_scores(c.corr_user, user_end_);
    }
  }

  const Matrix& poi_adjusted() const { return poi_adjusted_; }

  // Scores for the event at trajectory position `pos` of user u.
  std::vector<double> location_row(UserIndex u, std::size_t pos, Variant variant, const FusionStrategy& fusion) {
    const auto N = ds_.num_pois();
    const auto cut = ds_.trajectory(u)[pos].timestamp;
    const bool stepwise = opt_.user_scores == UserScoreMode::stepwise;

    std::vector<double> own = stepwise ? cache_.row(u, pos) : as_vector(user_end_.row(u));
    std::vector<double> adjusted;
    if (variant == Variant::full || variant == Variant::no_cross_poi || variant == Variant::no_user_prediction) {
      if (stepwise) {
        adjusted.assign(N, 0.0);
        for (UserIndex n = 0; n < ds_.num_users(); ++n) {
          const double w = c_.corr_user.values(u, n);
          if (w == 0.0) continue;
          const auto& r = n == u ? own : cache_.row(n, cache_.prefix_before(n, cut));
          for (std::size_t l = 0; l < N; ++l) adjusted[l] += w * r[l];
        }
        double s = 0.0;
        for (double v : adjusted) s += v;
        if (s != 0.0)
          for (double& v : adjusted) v /= s;
      } else {
        adjusted = as_vector(user_end_adjusted_.row(u));
      }
    }

    auto fuse_with = [&](const std::vector<double>& user_side, const Matrix& poi_side) {
      std::vector<double> out(N);
      for (std::size_t l = 0; l < N; ++l) out[l] = fusion.apply(user_side[l], poi_side(l, u));
      return out;
    };
    switch (variant) {
      case Variant::full: return fuse_with(adjusted, poi_adjusted_);
      case Variant::no_cross_poi: return fuse_with(adjusted, c_.poi_scores);
      case Variant::no_cross_user: return fuse_with(own, poi_adjusted_);
      case Variant::no_user_prediction: return adjusted;
      case Variant::user_net_only: return own;
      case Variant::poi_net_only: break;
    }
    throw UsageError("poi_net_only has no location-task score row");
  }

 private:
  static std::vector<double> as_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

  const Dataset& ds_;
  const Components& c_;
  const EvalOptions& opt_;
  UserRowCache cache_;
  Matrix poi_adjusted_;
  Matrix user_end_;
  Matrix user_end_adjusted_;
};

void check_shapes(const Dataset& ds, const Components& c) {
  const auto M = ds.num_users(), N = ds.num_pois();
  if (c.user_net.num_users() != M || c.user_net.num_pois() != N || c.poi_net.num_users() != M ||
      c.poi_net.num_pois() != N)
    throw ShapeError("model shapes do not match the dataset");
  if (c.corr_user.size() != M || c.corr_poi.size() != N || c.poi_scores.rows() != N || c.poi_scores.cols() != M)
    throw ShapeError("association matrices do not match the dataset");
}

}  // namespace

std::vector<InstanceRank> rank_instances(const Dataset& dataset, const Components& components, Variant variant,
                                         const FusionStrategy& fusion, const EvalOptions& options) {
  check_shapes(dataset, components);
  InstanceScorer scorer(dataset, components, options);
  std::vector<InstanceRank> out;

  if (variant == Variant::poi_net_only) {
    const auto& adjusted = scorer.poi_adjusted();
    for (PoiIndex l = 0; l < dataset.num_pois(); ++l) {
      std::set<UserIndex> seen;
      for (const auto& v : dataset.poi_train(l)) seen.insert(v.user);
      for (const auto& v : dataset.poi_test(l))
        out.push_back({l, v.user, rank_of(adjusted.row(l), v.user), !seen.contains(v.user)});
    }
    return out;
  }

  for (UserIndex u = 0; u < dataset.num_users(); ++u) {
    std::set<PoiIndex> seen;
    for (const auto& c : dataset.train(u)) seen.insert(c.poi);
    const auto traj = dataset.trajectory(u);
    for (std::size_t pos = dataset.train_size(u); pos < traj.size(); ++pos) {
      const auto row = scorer.location_row(u, pos, variant, fusion);
      const auto target = traj[pos].poi;
      out.push_back({u, target, rank_of(row, target), !seen.contains(target)});
    }
  }
  return out;
}

MetricSummary summarize(std::span<const InstanceRank> ranks, const std::vector<std::size_t>& ks) {
  MetricSummary s;
  s.ks = ks;
  s.instances = ranks.size();
  s.acc.assign(ks.size(), 0.0);
  if (ranks.empty()) return s;
  std::vector<std::size_t> r;
  r.reserve(ranks.size());
  for (const auto& i : ranks) r.push_back(i.rank);
  for (std::size_t i = 0; i < ks.size(); ++i) s.acc[i] = acc_from_ranks(r, ks[i]);
  s.mrr = mrr_from_ranks(r);
  return s;
}

SeedResult evaluate_seed(const Dataset& dataset, const Components& components, Variant variant,
                         const FusionStrategy& fusion, const EvalOptions& options, std::uint64_t seed) {
  const auto ranks = rank_instances(dataset, components, variant, fusion, options);
  if (ranks.empty()) throw DataError("empty test set");
  SeedResult res;
  res.seed = seed;
  res.overall = summarize(ranks, options.ks);
  std::vector<InstanceRank> novel;
  std::copy_if(ranks.begin(), ranks.end(), std::back_inserter(novel), [](const InstanceRank& r) { return r.novel; });
  res.novel = summarize(novel, options.ks);

  std::map<std::uint32_t, std::vector<InstanceRank>> groups;
  for (const auto& r : ranks) groups[r.subject].push_back(r);
  for (const auto& [entity, rs] : groups) {
    const auto s = summarize(rs, {1});
    res.per_entity.push_back({entity, rs.size(), s.acc[0], s.mrr});
  }
  return res;
}

EvalReport make_report(Variant variant, const FusionStrategy& fusion, std::vector<SeedResult> per_seed) {
  EvalReport rep;
  rep.variant = variant;
  rep.fusion = fusion;
  rep.label = to_string(variant) + "/" + fusion.label();
  if (per_seed.empty()) return rep;

  auto average = [&](auto pick) {
    MetricSummary m = pick(per_seed.front());
    std::fill(m.acc.begin(), m.acc.end(), 0.0);
    m.mrr = 0.0;
    std::size_t used = 0;
    for (const auto& s : per_seed) {
      const auto& x = pick(s);
      if (x.instances == 0) continue;
      ++used;
      for (std::size_t i = 0; i < m.acc.size(); ++i) m.acc[i] += x.acc[i];
      m.mrr += x.mrr;
    }
    if (used > 0) {
      for (double& a : m.acc) a /= static_cast<double>(used);
      m.mrr /= static_cast<double>(used);
    }
    return m;
  };
  rep.overall = average([](const SeedResult& s) -> const MetricSummary& { return s.overall; });
  rep.novel = average([](const SeedResult& s) -> const MetricSummary& { return s.novel; });
  for (const auto& s : per_seed) rep.seeds.push_back(s.seed);
  rep.per_seed = std::move(per_seed);
  return rep;
}

EvalReport run_variant(const Dataset& dataset, Variant variant, const FusionStrategy& fusion,
                       const std::vector<std::uint64_t>& seeds, const ModelConfig& config,
                       const EvalOptions& options) {
  return run_battery(dataset, {{variant, fusion}}, seeds, config, options).front();
}

std::vector<EvalReport> run_battery(const Dataset& dataset, const std::vector<Arm>& arms,
                                    const std::vector<std::uint64_t>& seeds, const ModelConfig& config,
                                    const EvalOptions& options) {
  if (seeds.empty()) throw UsageError("at least one seed is required");
  std::vector<std::vector<SeedResult>> results(arms.size());
  for (auto seed : seeds) {
    const auto components = train_components(dataset, config, seed, options.output);
    for (std::size_t a = 0; a < arms.size(); ++a)
      results[a].push_back(evaluate_seed(dataset, components, arms[a].variant, arms[a].fusion, options, seed));
  }
  std::vector<EvalReport> reports;
  for (std::size_t a = 0; a < arms.size(); ++a)
    reports.push_back(make_report(arms[a].variant, arms[a].fusion, std::move(results[a])));
  return reports;
}

std::vector<Arm> ablation_arms() {
  std::vector<Arm> arms;
  for (auto v : all_variants()) arms.push_back({v, FusionStrategy{}});
  for (const auto& [wu, wp] : {std::pair{0.1, 0.9}, {0.3, 0.7}, {0.5, 0.5}, {0.7, 0.3}, {0.9, 0.1}})
    arms.push_back({Variant::full, FusionStrategy::weighted(wu, wp)});
  arms.push_back({Variant::full, FusionStrategy::parse("multiply")});
  arms.push_back({Variant::full, FusionStrategy::parse("minpool")});
  arms.push_back({Variant::full, FusionStrategy::parse("sum")});
  return arms;
}

namespace {

nlohmann::ordered_json summary_json(const MetricSummary& m) {
  nlohmann::ordered_json j;
  for (std::size_t i = 0; i < m.ks.size(); ++i) j["acc@" + std::to_string(m.ks[i])] = m.acc[i];
  j["mrr"] = m.mrr;
  j["instances"] = m.instances;
  return j;
}

}  // namespace

std::string report_to_json(const std::vector<EvalReport>& reports, int indent) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["label"] = r.label;
    j["variant"] = to_string(r.variant);
    j["fusion"] = r.fusion.label();
    j["task"] = r.variant == Variant::poi_net_only ? "next_user" : "next_poi";
    j["repeats"] = r.seeds.size();
    j["seeds"] = r.seeds;
    j["overall"] = summary_json(r.overall);
    j["novel_target"] = summary_json(r.novel);
    auto seeds = nlohmann::ordered_json::array();
    for (const auto& s : r.per_seed) {
      nlohmann::ordered_json sj;
      sj["seed"] = s.seed;
      sj["overall"] = summary_json(s.overall);
      sj["novel_target"] = summary_json(s.novel);
      auto ents = nlohmann::ordered_json::array();
      for (const auto& e : s.per_entity)
        ents.push_back({{"entity", e.entity}, {"instances", e.instances}, {"acc@1", e.acc1}, {"mrr", e.mrr}});
      sj["per_entity"] = std::move(ents);
      seeds.push_back(std::move(sj));
    }
    j["per_seed"] = std::move(seeds);
    arr.push_back(std::move(j));
  }
  return arr.dump(indent) + "\n";
}

std::string report_to_text(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-34s %9s %9s %9s %9s %9s %7s\n", "variant/fusion", "Acc@1", "Acc@5", "Acc@10", "MRR",
                "novelMRR", "n");
  out << buf;
  for (const auto& r : reports) {
    auto acc = [&](std::size_t k) {
      for (std::size_t i = 0; i < r.overall.ks.size(); ++i)
        if (r.overall.ks[i] == k) return r.overall.acc[i];
      return 0.0;
    };
    std::snprintf(buf, sizeof buf, "%-34s %9.4f %9.4f %9.4f %9.4f %9.4f %7zu\n", r.label.c_str(), acc(1), acc(5),
                  acc(10), r.overall.mrr, r.novel.mrr, r.overall.instances);
    out << buf;
  }
  return out.str();
}

std::string case_report_json(const Dataset& dataset, const Components& components, UserIndex user, PoiIndex poi,
                             std::size_t top, const EvalOptions& options) {
  check_shapes(dataset, components);
  if (user >= dataset.num_users() || poi >= dataset.num_pois()) throw UsageError("case: user or POI out of range");
  const auto traj = dataset.trajectory(user);
  const auto pos = dataset.train_size(user);
  if (pos >= traj.size()) throw DataError("case: user has no test events");

  InstanceScorer scorer(dataset, components, options);
  nlohmann::ordered_json j;
  j["user"] = dataset.user_ids().raw(user);
  j["next_poi_truth"] = dataset.poi_ids().raw(traj[pos].poi);

  auto list_pois = [&](const std::vector<double>& row) {
    auto arr = nlohmann::ordered_json::array();
    for (auto l : rank_top_k(row, std::min(top, row.size())))
      arr.push_back({{"poi", dataset.poi_ids().raw(static_cast<PoiIndex>(l))}, {"score", row[l]}});
    return arr;
  };
  j["top_pois_user_net"] = list_pois(scorer.location_row(user, pos, Variant::user_net_only, FusionStrategy{}));
  j["top_pois_bsda"] = list_pois(scorer.location_row(user, pos, Variant::full, FusionStrategy{}));

  auto nearest = [](const Matrix& m, std::size_t r) {
    std::size_t best = r;
    double v = -1.0;
    for (std::size_t c = 0; c < m.cols(); ++c)
      if (c != r && m(r, c) > v) {
        v = m(r, c);
        best = c;
      }
    return std::pair{best, v};
  };
  if (dataset.num_users() > 1) {
    const auto [n, tau] = nearest(components.corr_user.values, user);
    j["most_similar_user"] = {{"user", dataset.user_ids().raw(static_cast<UserIndex>(n))}, {"similarity", tau}};
  }

  j["poi"] = dataset.poi_ids().raw(poi);
  j["poi_cold"] = dataset.is_cold(poi);
  auto list_users = [&](std::span<const double> row) {
    auto arr = nlohmann::ordered_json::array();
    for (auto u : rank_top_k(row, std::min(top, row.size())))
      arr.push_back({{"user", dataset.user_ids().raw(static_cast<UserIndex>(u))}, {"score", row[u]}});
    return arr;
  };
  j["top_users_poi_net"] = list_users(components.poi_scores.row(poi));
  j["top_users_adjusted"] = list_users(scorer.poi_adjusted().row(poi));
  if (dataset.num_pois() > 1) {
    const auto [m, sim] = nearest(components.corr_poi.values, poi);
    j["most_similar_poi"] = {{"poi", dataset.poi_ids().raw(static_cast<PoiIndex>(m))}, {"similarity", sim}};
  }
  return j.dump(2) + "\n";
}

}  // namespace bsda
