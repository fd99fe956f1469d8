#include "bsda/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "bsda/errors.hpp"

namespace bsda {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || p != end) throw UsageError("config key '" + key + "': bad value '" + text + "'");
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw UsageError("config key '" + key + "': empty list");
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field field(const char* key, T RunConfig::*member) {
  Field f{key, {}, {}};
  if constexpr (std::is_same_v<T, std::string>) {
    f.set = [member](RunConfig& c, const std::string& v) { c.*member = v; };
    f.get = [member](const RunConfig& c) { return c.*member; };
  } else if constexpr (std::is_same_v<T, double>) {
    f.set = [member, key](RunConfig& c, const std::string& v) { c.*member = parse_number<double>(key, v); };
    f.get = [member](const RunConfig& c) { return format_double(c.*member); };
  } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>> || std::is_same_v<T, std::vector<std::size_t>>) {
    f.set = [member, key](RunConfig& c, const std::string& v) {
      c.*member = parse_list<typename T::value_type>(key, v);
    };
    f.get = [member](const RunConfig& c) { return join(c.*member); };
  } else {
    f.set = [member, key](RunConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); };
    f.get = [member](const RunConfig& c) { return std::to_string(c.*member); };
  }
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      field("dataset", &RunConfig::dataset),
      field("input", &RunConfig::input),
      field("format", &RunConfig::format),
      field("min_user_records", &RunConfig::min_user_records),
      field("min_poi_records", &RunConfig::min_poi_records),
      field("split_ratio", &RunConfig::split_ratio),
      field("window", &RunConfig::window),
      field("slots_per_day", &RunConfig::slots_per_day),
      field("synth_spec", &RunConfig::synth_spec),
      field("dim", &RunConfig::dim),
      field("slot_dim", &RunConfig::slot_dim),
      field("alpha", &RunConfig::alpha),
      field("beta", &RunConfig::beta),
      field("context", &RunConfig::context),
      field("optimizer", &RunConfig::optimizer),
      field("learning_rate", &RunConfig::learning_rate),
      field("user_epochs", &RunConfig::user_epochs),
      field("poi_epochs", &RunConfig::poi_epochs),
      field("batch_size", &RunConfig::batch_size),
      field("user_similarity", &RunConfig::user_similarity),
      field("poi_normalization", &RunConfig::poi_normalization),
      field("top_k", &RunConfig::top_k),
      field("variant", &RunConfig::variant),
      field("fusion", &RunConfig::fusion),
      field("user_scores", &RunConfig::user_scores),
      field("score_output", &RunConfig::score_output),
      field("seeds", &RunConfig::seeds),
      field("ks", &RunConfig::ks),
      field("out", &RunConfig::out),
  };
  return f;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(n) + ": expected key = value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void apply_config_key(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : fields())
    if (key == f.key) return f.set(config, value);
  throw UsageError("unknown config key '" + key + "'");
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  for (const auto& [k, v] : read_key_values(path)) apply_config_key(config, k, v);
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(config));
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t config_hash(const RunConfig& config) {
  std::string canonical;
  for (const auto& [k, v] : config_entries(config))
    if (k != "out") canonical += k + "=" + v + "\n";
  return fnv1a64(canonical);
}

ModelConfig model_config(const RunConfig& c) {
  ModelConfig m;
  m.user.dim = c.dim;
  m.user.alpha = c.alpha;
  m.user.beta = c.beta;
  m.user.context = c.context;
  m.poi.dim = c.dim;
  m.poi.slot_dim = c.slot_dim;
  m.poi.slots_per_day = c.slots_per_day;
  m.poi.context = c.context;
  num::OptimizerConfig opt;
  opt.kind = num::parse_optimizer_kind(c.optimizer);
  opt.learning_rate = c.learning_rate;
  m.user_train.optimizer = opt;
  m.user_train.epochs = c.user_epochs;
  m.user_train.batch_size = c.batch_size;
  m.poi_train = m.user_train;
  m.poi_train.epochs = c.poi_epochs;
  m.association.user_mode = parse_user_similarity_mode(c.user_similarity);
  m.association.poi_normalization = parse_poi_normalization(c.poi_normalization);
  m.association.top_k = c.top_k;
  if (c.alpha < 0.0 || c.beta < 0.0) throw UsageError("alpha and beta must be non-negative");
  if (c.batch_size == 0) throw UsageError("batch_size must be >= 1");
  return m;
}

EvalOptions eval_options(const RunConfig& c) {
  EvalOptions o;
  o.ks = c.ks;
  for (auto k : o.ks)
    if (k == 0) throw UsageError("ks entries must be >= 1");
  o.user_scores = parse_user_score_mode(c.user_scores);
  if (c.score_output == "probability")
    o.output = ScoreOutput::probability;
  else if (c.score_output == "raw_logits")
    o.output = ScoreOutput::raw_logits;
  else
    throw UsageError("unknown score_output '" + c.score_output + "' (probability or raw_logits)");
  return o;
}

DatasetOptions dataset_options(const RunConfig& c) {
  return DatasetOptions{c.split_ratio, c.window, c.slots_per_day};
}

}  // namespace bsda
