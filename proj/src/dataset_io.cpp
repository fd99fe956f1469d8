#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "bsda/data.hpp"
#include "bsda/errors.hpp"

namespace bsda {

namespace {

constexpr std::string_view kFormatTag = "bsda-dataset-1";

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  return in;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& p) {
  auto in = open_in(p);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(p.string() + ": expected key=value, got '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

IdDictionary read_dictionary(const std::filesystem::path& p) {
  auto in = open_in(p);
  IdDictionary dict;
  std::string line;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || std::stoul(line.substr(0, tab)) != expected)
      throw DataError(p.string() + ": dictionary rows must be dense and ordered");
    if (dict.intern(line.substr(tab + 1)) != expected) throw DataError(p.string() + ": duplicate raw id");
    ++expected;
  }
  return dict;
}

void write_dictionary(const std::filesystem::path& p, const IdDictionary& dict) {
  auto out = open_out(p);
  for (std::size_t i = 0; i < dict.size(); ++i) out << i << '\t' << dict.raw(static_cast<std::uint32_t>(i)) << '\n';
}

template <class T>
T field_as(std::string_view s, const std::filesystem::path& p) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError(p.string() + ": bad field '" + std::string(s) + "'");
  return v;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir, const DatasetManifest& manifest) {
  std::filesystem::create_directories(dir);
  const auto& opt = dataset.options();
  {
    auto out = open_out(dir / "manifest.txt");
    out << "format=" << kFormatTag << '\n'
        << "source=" << manifest.source << '\n'
        << "seed=" << manifest.seed << '\n'
        << "users=" << dataset.num_users() << '\n'
        << "pois=" << dataset.num_pois() << '\n'
        << "records=" << dataset.num_records() << '\n'
        << "train_records=" << dataset.num_train_records() << '\n'
        << "split_ratio=" << format_double(opt.split_ratio) << '\n'
        << "window=" << opt.window << '\n'
        << "slots_per_day=" << opt.slots_per_day << '\n';
    for (const auto& [k, v] : manifest.extra) out << k << '=' << v << '\n';
  }
  {
    auto out = open_out(dir / "checkins.tsv");
    for (UserIndex u = 0; u < dataset.num_users(); ++u)
      for (const auto& r : dataset.trajectory(u))
        out << r.user << '\t' << r.timestamp << '\t' << format_double(r.lat) << '\t' << format_double(r.lon) << '\t'
            << r.poi << '\n';
  }
  write_dictionary(dir / "users.tsv", dataset.user_ids());
  write_dictionary(dir / "pois.tsv", dataset.poi_ids());
  {
    auto out = open_out(dir / "clones.tsv");
    for (const auto& [a, b] : dataset.clone_pairs()) out << a << '\t' << b << '\n';
  }
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto kv = read_key_values(dir / "manifest.txt");
  DatasetManifest m;
  for (const auto& [k, v] : kv) {
    if (k == "source")
      m.source = v;
    else if (k == "seed")
      m.seed = std::stoull(v);
    else if (k != "format" && k != "users" && k != "pois" && k != "records" && k != "train_records" &&
             k != "split_ratio" && k != "window" && k != "slots_per_day")
      m.extra.emplace_back(k, v);
  }
  return m;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  const auto kv = read_key_values(manifest_path);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(manifest_path.string() + ": missing key '" + key + "'");
    return it->second;
  };
  if (get("format") != kFormatTag) throw DataError(manifest_path.string() + ": unsupported format '" + get("format") + "'");

  DatasetOptions opt;
  opt.split_ratio = std::stod(get("split_ratio"));
  opt.window = std::stoul(get("window"));
  opt.slots_per_day = std::stoi(get("slots_per_day"));

  CheckInLog log;
  log.users = read_dictionary(dir / "users.tsv");
  log.pois = read_dictionary(dir / "pois.tsv");
  const auto records_path = dir / "checkins.tsv";
  auto in = open_in(records_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find('\t')) != std::string_view::npos; rest.remove_prefix(pos + 1))
      f.push_back(rest.substr(0, pos));
    f.push_back(rest);
    if (f.size() != 5) throw DataError(records_path.string() + ": expected 5 columns");
    CheckIn r;
    r.user = field_as<UserIndex>(f[0], records_path);
    r.timestamp = field_as<Timestamp>(f[1], records_path);
    r.lat = field_as<double>(f[2], records_path);
    r.lon = field_as<double>(f[3], records_path);
    r.poi = field_as<PoiIndex>(f[4], records_path);
    log.records.push_back(r);
  }
  if (log.records.size() != std::stoul(get("records")))
    throw DataError(records_path.string() + ": record count disagrees with manifest");

  auto ds = build_dataset(log, opt);
  std::vector<std::pair<UserIndex, UserIndex>> clones;
  if (std::filesystem::exists(dir / "clones.tsv")) {
    auto cin = open_in(dir / "clones.tsv");
    UserIndex a, b;
    while (cin >> a >> b) clones.emplace_back(a, b);
  }
  ds.set_clone_pairs(std::move(clones));
  return ds;
}

}  // namespace bsda
