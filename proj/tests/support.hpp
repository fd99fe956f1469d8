#pragma once

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "bsda/data.hpp"
#include "bsda/matrix.hpp"
#include "bsda/random.hpp"

namespace testing {

using bsda::CheckIn;
using bsda::CheckInLog;
using bsda::Dataset;
using bsda::Matrix;

/// (raw user, raw poi, timestamp) triple for hand-built fixtures.
struct Visit {
  std::string user;
  std::string poi;
  bsda::Timestamp t;
};

inline CheckInLog make_log(const std::vector<Visit>& visits) {
  CheckInLog log;
  for (const auto& v : visits) {
    const auto u = log.users.intern(v.user);
    const auto l = log.pois.intern(v.poi);
    log.records.push_back({u, v.t, 30.0 + 0.01 * l, -97.0 - 0.01 * l, l});
  }
  return log;
}

inline Dataset make_dataset(const std::vector<Visit>& visits, double ratio = 1.0, std::size_t window = 20) {
  return bsda::build_dataset(make_log(visits), bsda::DatasetOptions{ratio, window, 24});
}

constexpr bsda::Timestamp kDay = 86400;
constexpr bsda::Timestamp kBase = 1262304000;  // a Friday, 2010-01-01

/// Random dataset with M users and N POIs, every user with at least 2 events.
inline Dataset random_dataset(bsda::Rng& rng, std::size_t M, std::size_t N, double ratio = 0.8) {
  std::vector<Visit> visits;
  for (std::size_t u = 0; u < M; ++u) {
    const auto n = 2 + rng.index(15);
    bsda::Timestamp t = kBase + static_cast<bsda::Timestamp>(rng.index(5 * kDay));
    for (std::size_t k = 0; k < n; ++k) {
      t += static_cast<bsda::Timestamp>(rng.index(kDay));
      visits.push_back({"u" + std::to_string(u), "p" + std::to_string(rng.index(N)), t});
    }
  }
  std::stable_sort(visits.begin(), visits.end(), [](const Visit& a, const Visit& b) { return a.t < b.t; });
  return make_dataset(visits, ratio);
}

// ---- calendar oracle (C library, independent of the chrono-based code) ----

inline std::int64_t timegm_oracle(int y, int mo, int d, int h, int mi, int s) {
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = s;
  return static_cast<std::int64_t>(timegm(&tm));
}

/// Monday = 0 weekday from gmtime.
inline int weekday_oracle(std::int64_t t) {
  const std::time_t tt = static_cast<std::time_t>(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  return (tm.tm_wday + 6) % 7;
}

inline int slot_oracle(std::int64_t t, int slots) {
  const std::time_t tt = static_cast<std::time_t>(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  const long seconds = tm.tm_hour * 3600L + tm.tm_min * 60L + tm.tm_sec;
  return static_cast<int>(seconds * slots / 86400L);
}

// ---- brute-force similarity oracles over the train split ----

inline long day_index(std::int64_t t) {
  const std::time_t tt = static_cast<std::time_t>(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  return static_cast<long>(timegm_oracle(tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, 0, 0, 0) / kDay);
}

inline Matrix user_similarity_oracle(const Dataset& ds) {
  const auto M = ds.num_users();
  Matrix out(M, M);
  for (std::size_t m = 0; m < M; ++m) {
    std::set<std::uint32_t> lm;
    for (const auto& c : ds.train(static_cast<bsda::UserIndex>(m))) lm.insert(c.poi);
    for (std::size_t n = 0; n < M; ++n) {
      if (m == n) {
        out(m, n) = 1.0;
        continue;
      }
      if (lm.empty()) continue;
      std::size_t common = 0;
      for (auto l : lm) {
        bool found = false;
        for (const auto& c : ds.train(static_cast<bsda::UserIndex>(n))) found = found || c.poi == l;
        common += found;
      }
      out(m, n) = static_cast<double>(common) / static_cast<double>(lm.size());
    }
  }
  return out;
}

/// Raw counts: days on which some single user visited both POIs.
inline Matrix poi_days_oracle(const Dataset& ds) {
  const auto N = ds.num_pois();
  std::set<long> days;
  for (std::size_t u = 0; u < ds.num_users(); ++u)
    for (const auto& c : ds.train(static_cast<bsda::UserIndex>(u))) days.insert(day_index(c.timestamp));
  Matrix out(N, N);
  for (std::size_t a = 0; a < N; ++a)
    for (std::size_t b = 0; b < N; ++b) {
      if (a == b) continue;
      for (long day : days) {
        bool shared = false;
        for (std::size_t u = 0; u < ds.num_users() && !shared; ++u) {
          bool va = false, vb = false;
          for (const auto& c : ds.train(static_cast<bsda::UserIndex>(u))) {
            if (day_index(c.timestamp) != day) continue;
            va = va || c.poi == a;
            vb = vb || c.poi == b;
          }
          shared = va && vb;
        }
        out(a, b) += shared;
      }
    }
  return out;
}

inline Matrix poi_similarity_oracle(const Dataset& ds) {
  Matrix raw = poi_days_oracle(ds);
  double top = 0.0;
  for (std::size_t a = 0; a < raw.rows(); ++a)
    for (std::size_t b = 0; b < raw.cols(); ++b)
      if (a != b) top = std::max(top, raw(a, b));
  for (std::size_t a = 0; a < raw.rows(); ++a)
    for (std::size_t b = 0; b < raw.cols(); ++b) {
      if (a == b)
        raw(a, b) = 1.0;
      else if (top > 0.0)
        raw(a, b) /= top;
    }
  return raw;
}

// ---- statistics oracle: Spearman as Pearson of mid-ranks, O(n^2) ----

inline double spearman_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) {
        less += w < v[i];
        equal += w == v[i];
      }
      r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// ---- files ----

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("bsda_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// One user cycling deterministically through `cycle`, one visit per day.
inline std::vector<Visit> cycle_visits(const std::string& user, const std::vector<std::string>& cycle, std::size_t n,
                                       bsda::Timestamp start = kBase) {
  std::vector<Visit> v;
  for (std::size_t k = 0; k < n; ++k) v.push_back({user, cycle[k % cycle.size()], start + static_cast<bsda::Timestamp>(k) * kDay});
  return v;
}

}  // namespace testing
