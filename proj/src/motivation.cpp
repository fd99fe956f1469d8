#include "bsda/motivation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "bsda/association.hpp"
#include "bsda/errors.hpp"

namespace bsda {

const std::vector<Statistic>& all_statistics() {
  static const std::vector<Statistic> s{Statistic::visit_counts, Statistic::temporal_density,
                                        Statistic::user_sim_vs_common, Statistic::poi_sim_vs_common};
  return s;
}

std::string to_string(Statistic s) {
  switch (s) {
    case Statistic::visit_counts: return "visit_counts";
    case Statistic::temporal_density: return "temporal_density";
    case Statistic::user_sim_vs_common: return "user_sim_vs_common";
    case Statistic::poi_sim_vs_common: return "poi_sim_vs_common";
  }
  return "?";
}

Statistic parse_statistic(const std::string& name) {
  for (auto s : all_statistics())
    if (to_string(s) == name) return s;
  throw UsageError("unknown statistic '" + name +
                   "' (visit_counts, temporal_density, user_sim_vs_common, poi_sim_vs_common)");
}

Matrix visit_count_histogram(const Dataset& dataset, const std::vector<std::size_t>& thresholds) {
  std::vector<std::map<UserIndex, std::size_t>> per_poi(dataset.num_pois());
  for (UserIndex u = 0; u < dataset.num_users(); ++u)
    for (const auto& c : dataset.trajectory(u)) ++per_poi[c.poi][u];
  Matrix h(dataset.num_pois(), thresholds.size());
  for (PoiIndex l = 0; l < dataset.num_pois(); ++l)
    for (const auto& [u, count] : per_poi[l])
      for (std::size_t i = 0; i < thresholds.size(); ++i)
        if (count >= thresholds[i]) h(l, i) += 1.0;
  return h;
}

TemporalDensity temporal_density(const Dataset& dataset) {
  const auto N = dataset.num_pois();
  const auto S = static_cast<std::size_t>(dataset.options().slots_per_day);
  TemporalDensity d{Matrix(N, 7 * S), Matrix(N, S), Matrix(N, 7)};
  for (UserIndex u = 0; u < dataset.num_users(); ++u)
    for (const auto& c : dataset.trajectory(u)) {
      const auto ts = discretize_time(c.timestamp, dataset.options().slots_per_day);
      d.joint(c.poi, static_cast<std::size_t>(ts.weekday) * S + static_cast<std::size_t>(ts.slot)) += 1.0;
      d.slot(c.poi, static_cast<std::size_t>(ts.slot)) += 1.0;
      d.weekday(c.poi, static_cast<std::size_t>(ts.weekday)) += 1.0;
    }
  normalize_rows(d.joint);
  normalize_rows(d.slot);
  normalize_rows(d.weekday);
  return d;
}

std::vector<SimilaritySample> user_sim_vs_common(const Dataset& dataset) {
  const auto M = dataset.num_users();
  std::vector<std::set<PoiIndex>> locations(M);
  for (UserIndex u = 0; u < M; ++u)
    for (const auto& c : dataset.train(u)) locations[u].insert(c.poi);
  const auto tau = user_similarity(dataset);
  std::vector<SimilaritySample> out;
  for (UserIndex m = 0; m < M; ++m)
    for (UserIndex n = 0; n < M; ++n) {
      if (m == n) continue;
      std::size_t common = 0;
      for (auto l : locations[m]) common += locations[n].contains(l);
      out.push_back({m, n, tau.values(m, n), common});
    }
  return out;
}

std::vector<SimilaritySample> poi_sim_vs_common(const Dataset& dataset) {
  const auto N = dataset.num_pois();
  std::vector<std::set<UserIndex>> visitors(N);
  for (PoiIndex l = 0; l < N; ++l)
    for (const auto& v : dataset.poi_train(l)) visitors[l].insert(v.user);
  const auto corr = poi_similarity(dataset);
  std::vector<SimilaritySample> out;
  for (PoiIndex m = 0; m < N; ++m)
    for (PoiIndex n = m + 1; n < N; ++n) {
      std::size_t common = 0;
      for (auto u : visitors[m]) common += visitors[n].contains(u);
      out.push_back({m, n, corr.values(m, n), common});
    }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("spearman: sample sizes differ");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::string statistic_csv(const Dataset& dataset, Statistic which) {
  std::ostringstream out;
  const auto& users = dataset.user_ids();
  const auto& pois = dataset.poi_ids();
  switch (which) {
    case Statistic::visit_counts: {
      std::vector<std::size_t> thresholds(10);
      std::iota(thresholds.begin(), thresholds.end(), 1);
      const auto h = visit_count_histogram(dataset, thresholds);
      out << "poi,threshold,users\n";
      for (PoiIndex l = 0; l < dataset.num_pois(); ++l)
        for (std::size_t i = 0; i < thresholds.size(); ++i)
          out << pois.raw(l) << ',' << thresholds[i] << ',' << h(l, i) << '\n';
      break;
    }
    case Statistic::temporal_density: {
      const auto d = temporal_density(dataset);
      const auto S = static_cast<std::size_t>(dataset.options().slots_per_day);
      out << "poi,weekday,slot,density\n";
      for (PoiIndex l = 0; l < dataset.num_pois(); ++l)
        for (std::size_t w = 0; w < 7; ++w)
          for (std::size_t s = 0; s < S; ++s)
            out << pois.raw(l) << ',' << w << ',' << s << ',' << format_double(d.joint(l, w * S + s)) << '\n';
      break;
    }
    case Statistic::user_sim_vs_common:
      out << "user_a,user_b,similarity,common_pois\n";
      for (const auto& s : user_sim_vs_common(dataset))
        out << users.raw(s.a) << ',' << users.raw(s.b) << ',' << format_double(s.similarity) << ',' << s.common
            << '\n';
      break;
    case Statistic::poi_sim_vs_common:
      out << "poi_a,poi_b,similarity,common_users\n";
      for (const auto& s : poi_sim_vs_common(dataset))
        out << pois.raw(s.a) << ',' << pois.raw(s.b) << ',' << format_double(s.similarity) << ',' << s.common << '\n';
      break;
  }
  return out.str();
}

}  // namespace bsda
