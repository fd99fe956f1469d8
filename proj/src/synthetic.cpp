#include "bsda/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>

#include "bsda/errors.hpp"
#include "bsda/random.hpp"

namespace bsda {

void validate(const SyntheticSpec& s) {
  auto fraction = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (s.users < 1 || s.pois < 1) throw UsageError("synthetic spec needs at least one user and one POI");
  if (s.events_per_user < 2) throw UsageError("events_per_user must be >= 2");
  if (s.pool_size < 1 || s.pool_size > s.pois)
    throw UsageError("pool_size must be in [1, pois] (clone pool larger than N)");
  if (s.deferred_pool >= s.pool_size) throw UsageError("deferred_pool must be smaller than pool_size");
  if (!fraction(s.clone_fraction) || !fraction(s.pool_overlap) || !fraction(s.noise_rate) ||
      !fraction(s.sequence_strength))
    throw UsageError("clone_fraction, pool_overlap, noise_rate and sequence_strength must lie in [0, 1]");
  if (s.clone_fraction > 0.0 && s.pool_overlap + s.noise_rate > 1.0 + 1e-12)
    throw UsageError("pool_overlap + noise_rate exceeds 1");
  if (!(s.split_ratio > 0.0 && s.split_ratio <= 1.0)) throw UsageError("split_ratio must be in (0, 1]");
  if (s.window < 1 || s.slots_per_day < 1) throw UsageError("window and slots_per_day must be >= 1");
  if (s.start_time <= 0) throw UsageError("start_time must be positive");
}

namespace {

constexpr std::array<double, 7> kWeekdayHeavy{1.0, 1.0, 1.0, 1.0, 1.0, 0.15, 0.15};
constexpr std::array<double, 7> kWeekendHeavy{0.2, 0.2, 0.2, 0.2, 0.35, 1.0, 1.0};

double week_weight(WeekProfile p, int weekday) {
  switch (p) {
    case WeekProfile::weekday: return kWeekdayHeavy[weekday];
    case WeekProfile::weekend: return kWeekendHeavy[weekday];
    case WeekProfile::flat: break;
  }
  return 1.0;
}

struct UserPlan {
  std::vector<PoiIndex> order;    // cyclic visiting order over the pool
  std::size_t deferred = 0;       // trailing entries of `order` unlocked at the train cut
  std::vector<PoiIndex> private_pool;
  bool clone = false;
};

// Next visit time after `now` at roughly the POI's peak hour, rejecting days
// the POI's weekly profile disfavors.
Timestamp next_visit_time(Timestamp now, int peak_hour, WeekProfile profile, Rng& rng) {
  static constexpr std::array<int, 5> kOffsets{-2, -1, 0, 1, 2};
  static constexpr std::array<double, 5> kOffsetCdf{0.05, 0.25, 0.75, 0.95, 1.0};
  const double r = rng.uniform();
  int offset = 0;
  for (std::size_t i = 0; i < kOffsets.size(); ++i)
    if (r < kOffsetCdf[i]) {
      offset = kOffsets[i];
      break;
    }
  const int hour = ((peak_hour + offset) % 24 + 24) % 24;
  const Timestamp within_day = hour * 3600 + static_cast<Timestamp>(rng.index(3600));

  const Timestamp earliest = now + 3600;
  Timestamp day = earliest / kSecondsPerDay;
  Timestamp t = day * kSecondsPerDay + within_day;
  if (t < earliest) t += kSecondsPerDay;
  if (rng.bernoulli(0.3)) t += kSecondsPerDay;
  for (int tries = 0; tries < 7; ++tries) {
    if (rng.bernoulli(week_weight(profile, discretize_time(t).weekday))) break;
    t += kSecondsPerDay;
  }
  return t;
}

}  // namespace

SyntheticData generate_synthetic_with_truth(const SyntheticSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  const auto M = spec.users;
  const auto N = spec.pois;

  SyntheticTruth truth;
  std::vector<std::pair<double, double>> coords(N);
  truth.peak_hour.resize(N);
  truth.week_profile.resize(N);
  for (std::size_t l = 0; l < N; ++l) {
    coords[l] = {spec.center_lat + rng.uniform(-spec.spread_deg, spec.spread_deg),
                 spec.center_lon + rng.uniform(-spec.spread_deg, spec.spread_deg)};
    truth.peak_hour[l] = static_cast<int>(rng.index(24));
    truth.week_profile[l] = static_cast<WeekProfile>(rng.index(3));
  }

  const std::size_t n_pairs = static_cast<std::size_t>(spec.clone_fraction * static_cast<double>(M) / 2.0 + 1e-9);
  std::vector<UserIndex> perm(M);
  for (std::size_t u = 0; u < M; ++u) perm[u] = static_cast<UserIndex>(u);
  rng.shuffle(perm);

  std::vector<UserPlan> plans(M);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const auto a = perm[2 * p];
    const auto b = perm[2 * p + 1];
    truth.clone_pairs.emplace_back(std::min(a, b), std::max(a, b));
    const auto shared = rng.sample_distinct(N, spec.pool_size);
    plans[a].order = shared;
    plans[b].order.assign(shared.rbegin(), shared.rend());
    for (auto u : {a, b}) {
      plans[u].clone = true;
      plans[u].deferred = spec.deferred_pool;
      plans[u].private_pool = rng.sample_distinct(N, spec.pool_size);
    }
  }
  for (std::size_t u = 0; u < M; ++u)
    if (!plans[u].clone) plans[u].order = rng.sample_distinct(N, spec.pool_size);
  std::sort(truth.clone_pairs.begin(), truth.clone_pairs.end());
  for (const auto& plan : plans) truth.pool.push_back(plan.order);

  CheckInLog log;
  for (std::size_t u = 0; u < M; ++u) log.users.intern("u" + std::to_string(u));
  for (std::size_t l = 0; l < N; ++l) log.pois.intern("p" + std::to_string(l));

  const auto unlock_at = train_count_for(spec.events_per_user, spec.split_ratio);
  const double private_rate = std::max(0.0, 1.0 - spec.pool_overlap - spec.noise_rate);
  for (std::size_t u = 0; u < M; ++u) {
    const auto& plan = plans[u];
    Timestamp now = spec.start_time + static_cast<Timestamp>(rng.index(kSecondsPerDay));
    std::optional<PoiIndex> prev;
    for (std::size_t k = 0; k < spec.events_per_user; ++k) {
      const std::size_t available = k < unlock_at ? plan.order.size() - plan.deferred : plan.order.size();
      PoiIndex poi;
      const double r = rng.uniform();
      if (r < spec.noise_rate) {
        poi = static_cast<PoiIndex>(rng.index(N));
      } else if (plan.clone && r < spec.noise_rate + private_rate) {
        poi = plan.private_pool[rng.index(plan.private_pool.size())];
      } else {
        const auto first = plan.order.begin();
        const auto last = first + static_cast<std::ptrdiff_t>(available);
        const auto at = prev ? std::find(first, last, *prev) : last;
        if (at != last && rng.bernoulli(spec.sequence_strength)) {
          poi = *(std::next(at) == last ? first : std::next(at));
        } else {
          poi = plan.order[rng.index(available)];
        }
      }
      now = next_visit_time(now, truth.peak_hour[poi], truth.week_profile[poi], rng);
      log.records.push_back({static_cast<UserIndex>(u), now, coords[poi].first, coords[poi].second, poi});
      prev = poi;
    }
  }

  DatasetOptions opt;
  opt.split_ratio = spec.split_ratio;
  opt.window = spec.window;
  opt.slots_per_day = spec.slots_per_day;
  SyntheticData out{build_dataset(log, opt), std::move(truth)};
  out.dataset.set_clone_pairs(out.truth.clone_pairs);
  return out;
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  return generate_synthetic_with_truth(spec, seed).dataset;
}

namespace {

template <class T>
void assign_from(T& field, const std::string& value) {
  try {
    std::size_t used = 0;
    if constexpr (std::is_same_v<T, double>) {
      field = std::stod(value, &used);
    } else if constexpr (std::is_same_v<T, int>) {
      field = std::stoi(value, &used);
    } else if constexpr (std::is_same_v<T, std::int64_t>) {
      field = std::stoll(value, &used);
    } else {
      if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
      field = static_cast<T>(std::stoull(value, &used));
    }
    if (used != value.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw UsageError("invalid value '" + value + "'");
  }
}

template <class F>
void for_each_field(SyntheticSpec& s, F&& f) {
  f("users", s.users);
  f("pois", s.pois);
  f("events_per_user", s.events_per_user);
  f("clone_fraction", s.clone_fraction);
  f("pool_overlap", s.pool_overlap);
  f("noise_rate", s.noise_rate);
  f("pool_size", s.pool_size);
  f("deferred_pool", s.deferred_pool);
  f("sequence_strength", s.sequence_strength);
  f("split_ratio", s.split_ratio);
  f("window", s.window);
  f("slots_per_day", s.slots_per_day);
  f("start_time", s.start_time);
  f("center_lat", s.center_lat);
  f("center_lon", s.center_lon);
  f("spread_deg", s.spread_deg);
}

}  // namespace

void apply_synthetic_key(SyntheticSpec& spec, const std::string& key, const std::string& value) {
  bool found = false;
  for_each_field(spec, [&](const char* name, auto& field) {
    if (key == name) {
      try {
        assign_from(field, value);
      } catch (const UsageError&) {
        throw UsageError("synthetic spec key '" + key + "': invalid value '" + value + "'");
      }
      found = true;
    }
  });
  if (!found) throw UsageError("unknown synthetic spec key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> synthetic_spec_entries(const SyntheticSpec& spec) {
  std::vector<std::pair<std::string, std::string>> out;
  SyntheticSpec copy = spec;
  for_each_field(copy, [&](const char* name, auto& field) {
    if constexpr (std::is_same_v<std::decay_t<decltype(field)>, double>)
      out.emplace_back(name, format_double(field));
    else
      out.emplace_back(name, std::to_string(field));
  });
  return out;
}

SyntheticSpec read_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  SyntheticSpec spec;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    apply_synthetic_key(spec, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return spec;
}

}  // namespace bsda
