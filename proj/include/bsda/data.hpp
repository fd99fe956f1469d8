#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace bsda {

using UserIndex = std::uint32_t;
using PoiIndex = std::uint32_t;
using Timestamp = std::int64_t;  // seconds since epoch, UTC

inline constexpr std::int64_t kSecondsPerDay = 86400;

/// One check-in <u, t, lon, lat, l> with dense indices.
struct CheckIn {
  UserIndex user = 0;
  Timestamp timestamp = 0;
  double lat = 0.0;
  double lon = 0.0;
  PoiIndex poi = 0;

  friend bool operator==(const CheckIn&, const CheckIn&) = default;
};

/// Maps raw string ids to dense indices in first-seen order.
class IdDictionary {
 public:
  std::uint32_t intern(std::string_view raw);
  std::optional<std::uint32_t> find(std::string_view raw) const;
  const std::string& raw(std::uint32_t index) const { return raws_.at(index); }
  std::size_t size() const { return raws_.size(); }
  const std::vector<std::string>& raws() const { return raws_; }

  friend bool operator==(const IdDictionary& a, const IdDictionary& b) { return a.raws_ == b.raws_; }

 private:
  std::vector<std::string> raws_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Flat record set plus the dictionaries that give its indices meaning.
struct CheckInLog {
  std::vector<CheckIn> records;
  IdDictionary users;
  IdDictionary pois;
};

enum class InputFormat { gowalla, foursquare };

InputFormat parse_input_format(std::string_view name);
std::string_view to_string(InputFormat f);

struct ParseReport {
  CheckInLog log;
  std::size_t lines = 0;
  std::size_t malformed = 0;
  std::size_t first_malformed_line = 0;  // 1-based, 0 if none
};

/// Lines whose malformed share exceeds this fraction fail the whole parse.
inline constexpr double kMaxMalformedFraction = 0.01;

ParseReport parse_checkin_stream(std::istream& in, InputFormat format, std::string_view source = "<stream>");
ParseReport parse_checkin_file(const std::filesystem::path& path, InputFormat format);

/// Writes the external tab-separated format (raw ids, ISO-8601 time).
void write_checkin_stream(std::ostream& out, const CheckInLog& log);

Timestamp parse_iso8601_utc(std::string_view text);
std::string format_iso8601_utc(Timestamp t);

/// Keeps users with at least `min_user_records` records. With `min_poi_records` > 0,
/// POIs with fewer remaining records are dropped afterwards. Indices are recompacted
/// in first-seen order.
CheckInLog filter_inactive_users(const CheckInLog& log, std::size_t min_user_records = 100,
                                 std::size_t min_poi_records = 0);

struct TimeSlot {
  int slot = 0;
  int weekday = 0;  // Monday = 0

  friend bool operator==(const TimeSlot&, const TimeSlot&) = default;
};

TimeSlot discretize_time(Timestamp t, int slots_per_day = 24);

/// A visit <l, u, s, d> as seen from the POI side.
struct VisitEvent {
  PoiIndex poi = 0;
  UserIndex user = 0;
  int slot = 0;
  int weekday = 0;
  Timestamp timestamp = 0;

  friend bool operator==(const VisitEvent&, const VisitEvent&) = default;
};

/// A training window over one owner's train sequence: positions [begin, end).
struct Window {
  std::uint32_t owner = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
};

std::vector<Window> cut_windows(std::uint32_t owner, std::size_t sequence_length, std::size_t window);

struct DatasetOptions {
  double split_ratio = 0.8;
  std::size_t window = 20;
  int slots_per_day = 24;
};

/// Number of leading events assigned to training: ceil(ratio * total).
std::size_t train_count_for(std::size_t total, double ratio);

/// Immutable after construction. Both orderings are built from the same events.
class Dataset {
 public:
  std::size_t num_users() const { return users_.size(); }
  std::size_t num_pois() const { return pois_.size(); }
  const DatasetOptions& options() const { return options_; }
  const IdDictionary& user_ids() const { return users_; }
  const IdDictionary& poi_ids() const { return pois_; }

  /// Full chronological trajectory of a user.
  std::span<const CheckIn> trajectory(UserIndex u) const { return trajectories_[u]; }
  std::span<const CheckIn> train(UserIndex u) const;
  std::span<const CheckIn> test(UserIndex u) const;
  std::size_t train_size(UserIndex u) const { return train_counts_[u]; }

  std::span<const VisitEvent> poi_train(PoiIndex l) const { return poi_train_[l]; }
  std::span<const VisitEvent> poi_test(PoiIndex l) const { return poi_test_[l]; }
  bool is_cold(PoiIndex l) const { return poi_train_[l].empty(); }

  const std::vector<Window>& user_windows() const { return user_windows_; }
  const std::vector<Window>& poi_windows() const { return poi_windows_; }

  std::size_t num_records() const;
  std::size_t num_train_records() const;

  /// Planted clone pairs (synthetic data only).
  const std::vector<std::pair<UserIndex, UserIndex>>& clone_pairs() const { return clone_pairs_; }
  void set_clone_pairs(std::vector<std::pair<UserIndex, UserIndex>> pairs) { clone_pairs_ = std::move(pairs); }

  /// Dense record log in user-major chronological order.
  CheckInLog to_log() const;

 private:
  friend Dataset build_dataset(const CheckInLog& log, const DatasetOptions& options);

  DatasetOptions options_;
  IdDictionary users_;
  IdDictionary pois_;
  std::vector<std::vector<CheckIn>> trajectories_;
  std::vector<std::size_t> train_counts_;
  std::vector<std::vector<VisitEvent>> poi_train_;
  std::vector<std::vector<VisitEvent>> poi_test_;
  std::vector<Window> user_windows_;
  std::vector<Window> poi_windows_;
  std::vector<std::pair<UserIndex, UserIndex>> clone_pairs_;
};

Dataset build_dataset(const CheckInLog& log, const DatasetOptions& options = {});

/// Dataset directory: manifest.txt, checkins.tsv, users.tsv, pois.tsv, clones.tsv.
struct DatasetManifest {
  std::string source = "unknown";
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> extra;
};

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir, const DatasetManifest& manifest = {});
Dataset load_dataset(const std::filesystem::path& dir);
DatasetManifest read_manifest(const std::filesystem::path& dir);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace bsda
