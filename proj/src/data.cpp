#include "bsda/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "bsda/errors.hpp"

namespace bsda {

std::uint32_t IdDictionary::intern(std::string_view raw) {
  auto it = index_.find(std::string(raw));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(raws_.size());
  raws_.emplace_back(raw);
  index_.emplace(raws_.back(), id);
  return id;
}

std::optional<std::uint32_t> IdDictionary::find(std::string_view raw) const {
  auto it = index_.find(std::string(raw));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

InputFormat parse_input_format(std::string_view name) {
  if (name == "gowalla") return InputFormat::gowalla;
  if (name == "foursquare") return InputFormat::foursquare;
  throw UsageError("unknown input format '" + std::string(name) + "' (expected gowalla or foursquare)");
}

std::string_view to_string(InputFormat f) {
  return f == InputFormat::gowalla ? "gowalla" : "foursquare";
}

namespace {

template <class T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_fixed_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  for (char c : text)
    if (c < '0' || c > '9') return false;
  return parse_number(text, out);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::optional<Timestamp> try_parse_iso8601(std::string_view s, bool allow_offset) {
  // YYYY-MM-DDTHH:MM:SS followed by Z (or +00:00 when allowed)
  if (s.size() < 20) return std::nullopt;
  if (s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':')
    return std::nullopt;
  const auto suffix = s.substr(19);
  if (suffix != "Z" && !(allow_offset && suffix == "+00:00")) return std::nullopt;
  int y, mo, d, h, mi, se;
  if (!parse_fixed_int(s.substr(0, 4), y) || !parse_fixed_int(s.substr(5, 2), mo) ||
      !parse_fixed_int(s.substr(8, 2), d) || !parse_fixed_int(s.substr(11, 2), h) ||
      !parse_fixed_int(s.substr(14, 2), mi) || !parse_fixed_int(s.substr(17, 2), se))
    return std::nullopt;
  if (h > 23 || mi > 59 || se > 59) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return static_cast<Timestamp>(days) * kSecondsPerDay + h * 3600 + mi * 60 + se;
}

}  // namespace

Timestamp parse_iso8601_utc(std::string_view text) {
  auto t = try_parse_iso8601(text, true);
  if (!t) throw DataError("malformed ISO-8601 UTC timestamp '" + std::string(text) + "'");
  return *t;
}

std::string format_iso8601_utc(Timestamp t) {
  const auto days = static_cast<int>(t >= 0 ? t / kSecondsPerDay : -((-t + kSecondsPerDay - 1) / kSecondsPerDay));
  auto secs = t - static_cast<Timestamp>(days) * kSecondsPerDay;
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(secs / 3600),
                static_cast<int>((secs / 60) % 60), static_cast<int>(secs % 60));
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

ParseReport parse_checkin_stream(std::istream& in, InputFormat format, std::string_view source) {
  ParseReport report;
  const bool allow_offset = format == InputFormat::foursquare;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++report.lines;

    const auto fields = split_tabs(line);
    bool ok = fields.size() == 5 && !fields[0].empty() && !fields[4].empty();
    CheckIn rec;
    if (ok) {
      auto t = try_parse_iso8601(fields[1], allow_offset);
      ok = t && *t > 0 && parse_number(fields[2], rec.lat) && parse_number(fields[3], rec.lon) &&
           std::isfinite(rec.lat) && std::isfinite(rec.lon) && rec.lat >= -90.0 && rec.lat <= 90.0 &&
           rec.lon > -180.0 && rec.lon <= 180.0;
      if (ok) rec.timestamp = *t;
    }
    if (!ok) {
      ++report.malformed;
      if (report.first_malformed_line == 0) report.first_malformed_line = line_no;
      continue;
    }
    rec.user = report.log.users.intern(fields[0]);
    rec.poi = report.log.pois.intern(fields[4]);
    report.log.records.push_back(rec);
  }

  if (static_cast<double>(report.malformed) > kMaxMalformedFraction * static_cast<double>(report.lines)) {
    std::ostringstream msg;
    msg << source << ": " << report.malformed << " of " << report.lines
        << " lines malformed (first at line " << report.first_malformed_line << "); wrong format '"
        << to_string(format) << "'?";
    throw DataError(msg.str());
  }
  if (report.log.records.empty()) throw DataError(std::string(source) + ": empty result");
  return report;
}

ParseReport parse_checkin_file(const std::filesystem::path& path, InputFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  return parse_checkin_stream(in, format, path.string());
}

void write_checkin_stream(std::ostream& out, const CheckInLog& log) {
  for (const auto& r : log.records) {
    out << log.users.raw(r.user) << '\t' << format_iso8601_utc(r.timestamp) << '\t' << format_double(r.lat)
        << '\t' << format_double(r.lon) << '\t' << log.pois.raw(r.poi) << '\n';
  }
}

CheckInLog filter_inactive_users(const CheckInLog& log, std::size_t min_user_records, std::size_t min_poi_records) {
  if (min_user_records < 1) throw UsageError("min_user_records must be >= 1");

  std::vector<std::size_t> user_counts(log.users.size(), 0);
  for (const auto& r : log.records) ++user_counts[r.user];

  std::vector<const CheckIn*> kept;
  for (const auto& r : log.records)
    if (user_counts[r.user] >= min_user_records) kept.push_back(&r);

  if (min_poi_records > 0) {
    std::vector<std::size_t> poi_counts(log.pois.size(), 0);
    for (const auto* r : kept) ++poi_counts[r->poi];
    std::erase_if(kept, [&](const CheckIn* r) { return poi_counts[r->poi] < min_poi_records; });
  }
  if (kept.empty()) throw DataError("all users filtered out");

  CheckInLog out;
  out.records.reserve(kept.size());
  for (const auto* r : kept) {
    CheckIn c = *r;
    c.user = out.users.intern(log.users.raw(r->user));
    c.poi = out.pois.intern(log.pois.raw(r->poi));
    out.records.push_back(c);
  }
  return out;
}

TimeSlot discretize_time(Timestamp t, int slots_per_day) {
  if (slots_per_day < 1) throw UsageError("slots_per_day must be >= 1");
  auto days = t / kSecondsPerDay;
  auto secs = t % kSecondsPerDay;
  if (secs < 0) {
    secs += kSecondsPerDay;
    --days;
  }
  TimeSlot ts;
  ts.slot = static_cast<int>(secs * slots_per_day / kSecondsPerDay);
  // 1970-01-01 was a Thursday (index 3 with Monday = 0).
  ts.weekday = static_cast<int>(((days + 3) % 7 + 7) % 7);
  return ts;
}

std::vector<Window> cut_windows(std::uint32_t owner, std::size_t sequence_length, std::size_t window) {
  if (window < 1) throw UsageError("window must be >= 1");
  std::vector<Window> out;
  for (std::size_t begin = 0; begin + 1 < sequence_length; begin += window) {
    const std::size_t end = std::min(begin + window + 1, sequence_length);
    out.push_back({owner, begin, end});
  }
  return out;
}

std::size_t train_count_for(std::size_t total, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw UsageError("split ratio must be in (0, 1]");
  // Guard against products like 0.7 * 10 = 7.000000000000001.
  const double raw = std::ceil(ratio * static_cast<double>(total) - 1e-9);
  return std::min(total, static_cast<std::size_t>(std::max(0.0, raw)));
}

std::span<const CheckIn> Dataset::train(UserIndex u) const {
  return std::span<const CheckIn>(trajectories_[u]).first(train_counts_[u]);
}

std::span<const CheckIn> Dataset::test(UserIndex u) const {
  return std::span<const CheckIn>(trajectories_[u]).subspan(train_counts_[u]);
}

std::size_t Dataset::num_records() const {
  std::size_t n = 0;
  for (const auto& t : trajectories_) n += t.size();
  return n;
}

std::size_t Dataset::num_train_records() const {
  std::size_t n = 0;
  for (auto c : train_counts_) n += c;
  return n;
}

CheckInLog Dataset::to_log() const {
  CheckInLog log;
  log.users = users_;
  log.pois = pois_;
  for (const auto& t : trajectories_) log.records.insert(log.records.end(), t.begin(), t.end());
  return log;
}

Dataset build_dataset(const CheckInLog& log, const DatasetOptions& options) {
  if (log.records.empty()) throw DataError("no records to build a dataset from");
  if (options.window < 1) throw UsageError("window must be >= 1");

  Dataset ds;
  ds.options_ = options;
  ds.users_ = log.users;
  ds.pois_ = log.pois;
  const auto M = log.users.size();
  const auto N = log.pois.size();

  ds.trajectories_.assign(M, {});
  for (const auto& r : log.records) {
    if (r.user >= M || r.poi >= N) throw DataError("record index outside dictionary range");
    ds.trajectories_[r.user].push_back(r);
  }
  ds.train_counts_.resize(M);
  for (UserIndex u = 0; u < M; ++u) {
    auto& traj = ds.trajectories_[u];
    std::stable_sort(traj.begin(), traj.end(),
                     [](const CheckIn& a, const CheckIn& b) { return a.timestamp < b.timestamp; });
    const auto n_train = train_count_for(traj.size(), options.split_ratio);
    if (n_train < 2)
      throw DataError("user '" + log.users.raw(u) + "' has " + std::to_string(n_train) +
                      " train events after split (need >= 2)");
    ds.train_counts_[u] = n_train;
  }

  ds.poi_train_.assign(N, {});
  ds.poi_test_.assign(N, {});
  for (UserIndex u = 0; u < M; ++u) {
    const auto& traj = ds.trajectories_[u];
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const auto ts = discretize_time(traj[i].timestamp, options.slots_per_day);
      VisitEvent v{traj[i].poi, u, ts.slot, ts.weekday, traj[i].timestamp};
      (i < ds.train_counts_[u] ? ds.poi_train_ : ds.poi_test_)[v.poi].push_back(v);
    }
  }
  auto by_time = [](const VisitEvent& a, const VisitEvent& b) { return a.timestamp < b.timestamp; };
  for (auto& h : ds.poi_train_) std::stable_sort(h.begin(), h.end(), by_time);
  for (auto& h : ds.poi_test_) std::stable_sort(h.begin(), h.end(), by_time);

  for (UserIndex u = 0; u < M; ++u) {
    auto w = cut_windows(u, ds.train_counts_[u], options.window);
    ds.user_windows_.insert(ds.user_windows_.end(), w.begin(), w.end());
  }
  for (PoiIndex l = 0; l < N; ++l) {
    auto w = cut_windows(l, ds.poi_train_[l].size(), options.window);
    ds.poi_windows_.insert(ds.poi_windows_.end(), w.begin(), w.end());
  }
  return ds;
}

}  // namespace bsda
