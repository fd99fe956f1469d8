#include "bsda/association.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "bsda/errors.hpp"

namespace bsda {

UserSimilarityMode parse_user_similarity_mode(const std::string& s) {
  if (s == "location_sets") return UserSimilarityMode::location_sets;
  if (s == "same_day") return UserSimilarityMode::same_day;
  throw UsageError("unknown user similarity mode '" + s + "' (expected location_sets or same_day)");
}

PoiNormalization parse_poi_normalization(const std::string& s) {
  if (s == "global_max") return PoiNormalization::global_max;
  if (s == "row_max") return PoiNormalization::row_max;
  throw UsageError("unknown POI normalization '" + s + "' (expected global_max or row_max)");
}

namespace {

std::int64_t day_of(Timestamp t) { return t >= 0 ? t / kSecondsPerDay : -((-t + kSecondsPerDay - 1) / kSecondsPerDay); }

std::size_t sorted_intersection_size(const std::vector<PoiIndex>& a, const std::vector<PoiIndex>& b) {
  std::size_t n = 0;
  for (auto i = a.begin(), j = b.begin(); i != a.end() && j != b.end();) {
    if (*i < *j)
      ++i;
    else if (*j < *i)
      ++j;
    else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

}  // namespace

SimilarityMatrix user_similarity(const Dataset& dataset, UserSimilarityMode mode) {
  const auto M = dataset.num_users();
  std::vector<std::vector<PoiIndex>> locations(M);
  // (poi, day) pairs per user, sorted, for the same-day variant
  std::vector<std::vector<std::pair<PoiIndex, std::int64_t>>> visits(M);
  for (UserIndex u = 0; u < M; ++u) {
    for (const auto& c : dataset.train(u)) {
      locations[u].push_back(c.poi);
      visits[u].emplace_back(c.poi, day_of(c.timestamp));
    }
    std::sort(locations[u].begin(), locations[u].end());
    locations[u].erase(std::unique(locations[u].begin(), locations[u].end()), locations[u].end());
    std::sort(visits[u].begin(), visits[u].end());
    visits[u].erase(std::unique(visits[u].begin(), visits[u].end()), visits[u].end());
  }

  SimilarityMatrix sim{SimilarityKind::user, Matrix(M, M)};
  for (UserIndex m = 0; m < M; ++m) {
    sim.values(m, m) = 1.0;
    if (locations[m].empty()) continue;
    const double denom = static_cast<double>(locations[m].size());
    for (UserIndex n = 0; n < M; ++n) {
      if (n == m) continue;
      std::size_t common = 0;
      if (mode == UserSimilarityMode::location_sets) {
        common = sorted_intersection_size(locations[m], locations[n]);
      } else {
        std::vector<std::pair<PoiIndex, std::int64_t>> shared;
        std::set_intersection(visits[m].begin(), visits[m].end(), visits[n].begin(), visits[n].end(),
                              std::back_inserter(shared));
        std::vector<PoiIndex> pois;
        for (const auto& [p, d] : shared) pois.push_back(p);
        common = static_cast<std::size_t>(std::unique(pois.begin(), pois.end()) - pois.begin());
      }
      sim.values(m, n) = static_cast<double>(common) / denom;
    }
  }
  return sim;
}

Matrix poi_shared_visitor_days(const Dataset& dataset) {
  const auto N = dataset.num_pois();
  // (day, user, poi) triples from the train split
  std::vector<std::tuple<std::int64_t, UserIndex, PoiIndex>> triples;
  for (UserIndex u = 0; u < dataset.num_users(); ++u)
    for (const auto& c : dataset.train(u)) triples.emplace_back(day_of(c.timestamp), u, c.poi);
  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());

  Matrix counts(N, N);
  std::vector<std::pair<PoiIndex, PoiIndex>> day_pairs;
  for (std::size_t i = 0; i < triples.size();) {
    const auto day = std::get<0>(triples[i]);
    day_pairs.clear();
    while (i < triples.size() && std::get<0>(triples[i]) == day) {
      const auto user = std::get<1>(triples[i]);
      const auto group_begin = i;
      while (i < triples.size() && std::get<0>(triples[i]) == day && std::get<1>(triples[i]) == user) ++i;
      for (auto a = group_begin; a < i; ++a)
        for (auto b = a + 1; b < i; ++b) day_pairs.emplace_back(std::get<2>(triples[a]), std::get<2>(triples[b]));
    }
    std::sort(day_pairs.begin(), day_pairs.end());
    day_pairs.erase(std::unique(day_pairs.begin(), day_pairs.end()), day_pairs.end());
    for (const auto& [a, b] : day_pairs) {
      counts(a, b) += 1.0;
      counts(b, a) += 1.0;
    }
  }
  return counts;
}

SimilarityMatrix poi_similarity(const Dataset& dataset, PoiNormalization norm) {
  Matrix counts = poi_shared_visitor_days(dataset);
  const auto N = counts.rows();
  if (norm == PoiNormalization::global_max) {
    const double top = counts.empty() ? 0.0 : *std::max_element(counts.values().begin(), counts.values().end());
    if (top > 0.0)
      for (double& v : counts.values()) v /= top;
  } else {
    for (std::size_t r = 0; r < N; ++r) {
      auto row = counts.row(r);
      const double top = *std::max_element(row.begin(), row.end());
      if (top > 0.0)
        for (double& v : row) v /= top;
    }
  }
  for (std::size_t i = 0; i < N; ++i) counts(i, i) = 1.0;
  return {SimilarityKind::poi, std::move(counts)};
}

void truncate_top_k(SimilarityMatrix& sim, std::size_t k) {
  if (k == 0) return;
  const auto n = sim.size();
  std::vector<std::size_t> idx;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = sim.values.row(r);
    idx.clear();
    for (std::size_t c = 0; c < n; ++c)
      if (c != r && row[c] > 0.0) idx.push_back(c);
    if (idx.size() <= k) continue;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (std::size_t i = k; i < idx.size(); ++i) row[idx[i]] = 0.0;
  }
}

SimilarityMatrix identity_similarity(SimilarityKind kind, std::size_t n) { return {kind, Matrix::identity(n)}; }

Matrix adjust_scores(const SimilarityMatrix& corr, const Matrix& scores) {
  if (corr.values.rows() != corr.values.cols() || corr.values.cols() != scores.rows())
    throw ShapeError("association: similarity " + corr.values.shape_string() + " cannot adjust scores " +
                     scores.shape_string());
  Matrix out = matmul(corr.values, scores);
  normalize_rows(out);
  return out;
}

Matrix adjust_user_scores(const SimilarityMatrix& corr_user, const Matrix& user_scores) {
  if (corr_user.kind != SimilarityKind::user) throw ShapeError("adjust_user_scores needs a user similarity matrix");
  return adjust_scores(corr_user, user_scores);
}

Matrix adjust_poi_scores(const SimilarityMatrix& corr_poi, const Matrix& poi_scores) {
  if (corr_poi.kind != SimilarityKind::poi) throw ShapeError("adjust_poi_scores needs a POI similarity matrix");
  return adjust_scores(corr_poi, poi_scores);
}

void write_similarity(const std::filesystem::path& path, const SimilarityMatrix& sim) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# bsda-similarity kind=" << (sim.kind == SimilarityKind::user ? "user" : "poi") << " size=" << sim.size()
      << '\n';
  for (std::size_t r = 0; r < sim.size(); ++r)
    for (std::size_t c = 0; c < sim.size(); ++c)
      if (const double v = sim.values(r, c); v != 0.0) out << r << '\t' << c << '\t' << format_double(v) << '\n';
}

SimilarityMatrix read_similarity(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string hash, tag, kind_field, size_field;
  hs >> hash >> tag >> kind_field >> size_field;
  if (hash != "#" || tag != "bsda-similarity" || kind_field.rfind("kind=", 0) != 0 || size_field.rfind("size=", 0) != 0)
    throw DataError(path.string() + ": not a similarity triplet file");
  SimilarityMatrix sim;
  const auto kind = kind_field.substr(5);
  if (kind == "user")
    sim.kind = SimilarityKind::user;
  else if (kind == "poi")
    sim.kind = SimilarityKind::poi;
  else
    throw DataError(path.string() + ": unknown kind '" + kind + "'");
  const auto n = std::stoul(size_field.substr(5));
  sim.values = Matrix(n, n);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t r, c;
    std::string v;
    if (!(ls >> r >> c >> v) || r >= n || c >= n) throw DataError(path.string() + ": bad triplet '" + line + "'");
    sim.values(r, c) = std::stod(v);
  }
  return sim;
}

}  // namespace bsda
