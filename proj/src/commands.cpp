#include "bsda/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <list>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bsda/association.hpp"
#include "bsda/config.hpp"
#include "bsda/data.hpp"
#include "bsda/errors.hpp"
#include "bsda/evaluation.hpp"
#include "bsda/motivation.hpp"
#include "bsda/synthetic.hpp"

namespace bsda {

namespace fs = std::filesystem;

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Output directory plus a content-hash ledger of everything written into it.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  const fs::path& dir() const { return dir_; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, const std::string& bytes) {
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw DataError("cannot write " + path(name).string());
    out << bytes;
    out.close();
    record(name);
  }

  void record(const std::string& name) {
    const auto bytes = read_bytes(path(name));
    entries_[name] = {hex64(fnv1a64(bytes)), bytes.size()};
  }

  void finish(const std::string& command, const RunConfig& config, double elapsed_seconds) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config_hash"] = hex64(config_hash(config));
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : config_entries(config))
      if (k != "out") cfg[k] = v;
    j["config"] = std::move(cfg);
    j["seeds"] = config.seeds;
    auto arts = nlohmann::ordered_json::array();
    for (const auto& [name, e] : entries_) arts.push_back({{"name", name}, {"fnv1a64", e.first}, {"bytes", e.second}});
    j["artifacts"] = std::move(arts);
    std::ofstream(path("run.json"), std::ios::binary) << j.dump(2) << '\n';

    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    std::ofstream(path("run.log"), std::ios::binary)
        << "command=" << command << "\nfinished=" << format_iso8601_utc(secs) << "\nelapsed_seconds=" << elapsed_seconds
        << '\n';
  }

 private:
  fs::path dir_;
  std::map<std::string, std::pair<std::string, std::size_t>> entries_;
};

fs::path output_dir(const RunConfig& config, const std::string& command) {
  if (!config.out.empty()) return config.out;
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root && *root ? root : "bsda-out") / command;
}

Dataset open_dataset(const RunConfig& config) {
  if (config.dataset.empty()) throw UsageError("no dataset directory given (--dataset or dataset=)");
  return load_dataset(config.dataset);
}

std::string score_csv(const Matrix& scores, const IdDictionary& row_ids, const IdDictionary& col_ids,
                      const char* corner) {
  std::ostringstream out;
  out << corner;
  for (const auto& raw : col_ids.raws()) out << ',' << raw;
  out << '\n';
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    out << row_ids.raw(static_cast<std::uint32_t>(r));
    for (double v : scores.row(r)) out << ',' << format_double(v);
    out << '\n';
  }
  return out.str();
}

std::string loss_tsv(const TrainLog& log) {
  std::ostringstream out;
  out << "epoch\tloss\n";
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) out << e + 1 << '\t' << format_double(log.epoch_loss[e]) << '\n';
  return out.str();
}

std::uint64_t checkpoint_seed(const num::Checkpoint& ckpt) {
  auto it = ckpt.meta.find("seed");
  return it == ckpt.meta.end() ? 0 : std::stoull(it->second);
}

struct LoadedComponents {
  Components components;
  std::uint64_t seed;
};

LoadedComponents components_from_checkpoints(const Dataset& ds, const RunConfig& config, const std::string& user_ckpt,
                                             const std::string& poi_ckpt) {
  const auto u = num::load_checkpoint(user_ckpt);
  const auto p = num::load_checkpoint(poi_ckpt);
  auto user_net = UserNet::from_checkpoint(u);
  auto poi_net = PoiNet::from_checkpoint(p);
  if (user_net.num_users() != ds.num_users() || user_net.num_pois() != ds.num_pois() ||
      poi_net.num_users() != ds.num_users() || poi_net.num_pois() != ds.num_pois())
    throw DataError("checkpoint shapes do not match the dataset");
  const auto opts = eval_options(config);
  return {assemble_components(ds, std::move(user_net), std::move(poi_net), model_config(config).association,
                              opts.output),
          checkpoint_seed(u)};
}

std::vector<Arm> arms_for(const RunConfig& config) {
  const auto fusion = FusionStrategy::parse(config.fusion);
  std::vector<Arm> arms;
  if (config.variant == "all") {
    for (auto v : all_variants()) arms.push_back({v, fusion});
  } else {
    arms.push_back({parse_variant(config.variant), fusion});
  }
  return arms;
}

void print_summary(std::ostream& out, const Dataset& ds) {
  out << "users " << ds.num_users() << ", pois " << ds.num_pois() << ", records " << ds.num_records() << ", train "
      << ds.num_train_records() << ", test " << ds.num_records() - ds.num_train_records() << '\n';
}

// ---- subcommands ----

void cmd_ingest(const RunConfig& config, Artifacts& art, std::ostream& out) {
  if (config.input.empty()) throw UsageError("ingest needs an input file (--input)");
  const auto report = parse_checkin_file(config.input, parse_input_format(config.format));
  const auto filtered = filter_inactive_users(report.log, config.min_user_records, config.min_poi_records);
  const auto ds = build_dataset(filtered, dataset_options(config));
  DatasetManifest manifest;
  manifest.source = fs::path(config.input).filename().string();
  manifest.extra = {{"input_format", config.format},
                    {"raw_lines", std::to_string(report.lines)},
                    {"malformed_lines", std::to_string(report.malformed)},
                    {"min_user_records", std::to_string(config.min_user_records)},
                    {"min_poi_records", std::to_string(config.min_poi_records)}};
  save_dataset(ds, art.dir(), manifest);
  for (const char* f : {"manifest.txt", "checkins.tsv", "users.tsv", "pois.tsv", "clones.tsv"})
    if (fs::exists(art.path(f))) art.record(f);
  out << "parsed " << report.lines << " lines (" << report.malformed << " malformed)\n";
  print_summary(out, ds);
}

void cmd_synth(const RunConfig& config, const std::vector<std::string>& overrides, Artifacts& art, std::ostream& out) {
  SyntheticSpec spec = config.synth_spec.empty() ? SyntheticSpec{} : read_synthetic_spec(config.synth_spec);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--synth expects key=value, got '" + kv + "'");
    apply_synthetic_key(spec, kv.substr(0, eq), kv.substr(eq + 1));
  }
  const auto seed = config.seeds.front();
  const auto ds = generate_synthetic(spec, seed);
  DatasetManifest manifest{"synthetic", seed, {}};
  for (const auto& [k, v] : synthetic_spec_entries(spec)) manifest.extra.emplace_back("synth." + k, v);
  save_dataset(ds, art.dir(), manifest);
  for (const char* f : {"manifest.txt", "checkins.tsv", "users.tsv", "pois.tsv", "clones.tsv"})
    if (fs::exists(art.path(f))) art.record(f);
  print_summary(out, ds);
  out << "clone pairs " << ds.clone_pairs().size() << '\n';
}

void cmd_train(const RunConfig& config, const std::string& net, Artifacts& art, std::ostream& out) {
  if (net != "user" && net != "poi" && net != "both") throw UsageError("--net must be user, poi or both");
  const auto ds = open_dataset(config);
  auto mc = model_config(config);
  const auto opts = eval_options(config);
  const auto seed = config.seeds.front();
  if (net != "poi") {
    UserNet model(ds.num_users(), ds.num_pois(), mc.user, seed);
    mc.user_train.seed = seed;
    const auto log = train_user_net(model, ds, mc.user_train);
    auto ckpt = model.checkpoint();
    ckpt.meta["seed"] = std::to_string(seed);
    art.write("user_net.ckpt", num::encode_checkpoint(ckpt));
    art.write("user_net.loss.tsv", loss_tsv(log));
    art.write("user_scores.csv",
              score_csv(predict_user_scores_train_end(ds, model, opts.output), ds.user_ids(), ds.poi_ids(), "user"));
    out << "user_net: " << log.epoch_loss.size() << " epochs, train acc@1 " << user_net_train_accuracy(model, ds)
        << '\n';
  }
  if (net != "user") {
    mc.poi.slots_per_day = ds.options().slots_per_day;
    PoiNet model(ds.num_users(), ds.num_pois(), mc.poi, seed);
    mc.poi_train.seed = seed;
    const auto log = train_poi_net(model, ds, mc.poi_train);
    auto ckpt = model.checkpoint();
    ckpt.meta["seed"] = std::to_string(seed);
    art.write("poi_net.ckpt", num::encode_checkpoint(ckpt));
    art.write("poi_net.loss.tsv", loss_tsv(log));
    art.write("poi_scores.csv", score_csv(predict_poi_scores(ds, model, opts.output), ds.poi_ids(), ds.user_ids(), "poi"));
    out << "poi_net: " << log.epoch_loss.size() << " epochs, train acc@1 " << poi_net_train_accuracy(model, ds) << '\n';
  }
}

void cmd_associate(const RunConfig& config, Artifacts& art, std::ostream& out) {
  const auto ds = open_dataset(config);
  const auto assoc = model_config(config).association;
  auto cu = user_similarity(ds, assoc.user_mode);
  auto cl = poi_similarity(ds, assoc.poi_normalization);
  truncate_top_k(cu, assoc.top_k);
  truncate_top_k(cl, assoc.top_k);
  write_similarity(art.path("corr_user.tsv"), cu);
  write_similarity(art.path("corr_poi.tsv"), cl);
  art.record("corr_user.tsv");
  art.record("corr_poi.tsv");
  out << "Corr_U " << cu.size() << "x" << cu.size() << ", Corr_L " << cl.size() << "x" << cl.size() << '\n';
}

void cmd_evaluate(const RunConfig& config, const std::string& user_ckpt, const std::string& poi_ckpt, Artifacts& art,
                  std::ostream& out) {
  const auto ds = open_dataset(config);
  const auto arms = arms_for(config);
  const auto opts = eval_options(config);
  std::vector<EvalReport> reports;
  if (!user_ckpt.empty() || !poi_ckpt.empty()) {
    if (user_ckpt.empty() || poi_ckpt.empty()) throw UsageError("give both --user-ckpt and --poi-ckpt, or neither");
    const auto loaded = components_from_checkpoints(ds, config, user_ckpt, poi_ckpt);
    for (const auto& arm : arms)
      reports.push_back(make_report(arm.variant, arm.fusion,
                                    {evaluate_seed(ds, loaded.components, arm.variant, arm.fusion, opts, loaded.seed)}));
  } else {
    reports = run_battery(ds, arms, config.seeds, model_config(config), opts);
  }
  art.write("report.json", report_to_json(reports));
  const auto text = report_to_text(reports);
  art.write("report.txt", text);
  out << text;
}

void cmd_ablate(const RunConfig& config, Artifacts& art, std::ostream& out) {
  const auto ds = open_dataset(config);
  const auto reports = run_battery(ds, ablation_arms(), config.seeds, model_config(config), eval_options(config));
  art.write("ablation.json", report_to_json(reports));
  const auto text = report_to_text(reports);
  art.write("ablation.txt", text);
  out << text;
}

void cmd_stats(const RunConfig& config, const std::string& which, Artifacts& art, std::ostream& out) {
  const auto ds = open_dataset(config);
  std::vector<Statistic> stats;
  if (which == "all")
    stats = all_statistics();
  else
    stats.push_back(parse_statistic(which));
  std::ostringstream summary;
  for (auto s : stats) {
    art.write(to_string(s) + ".csv", statistic_csv(ds, s));
    if (s == Statistic::user_sim_vs_common || s == Statistic::poi_sim_vs_common) {
      const auto samples = s == Statistic::user_sim_vs_common ? user_sim_vs_common(ds) : poi_sim_vs_common(ds);
      std::vector<double> x, y;
      for (const auto& p : samples) {
        x.push_back(p.similarity);
        y.push_back(static_cast<double>(p.common));
      }
      summary << to_string(s) << " spearman " << format_double(spearman(x, y)) << " pairs " << samples.size() << '\n';
    }
  }
  if (!summary.str().empty()) art.write("stats_summary.txt", summary.str());
  out << summary.str();
  out << "wrote " << stats.size() << " statistic(s) to " << art.dir().string() << '\n';
}

void cmd_case(const RunConfig& config, const std::string& user, const std::string& poi, std::size_t top,
              const std::string& user_ckpt, const std::string& poi_ckpt, Artifacts& art, std::ostream& out) {
  const auto ds = open_dataset(config);
  const auto u = ds.user_ids().find(user);
  const auto l = ds.poi_ids().find(poi);
  if (!u) throw UsageError("unknown user id '" + user + "'");
  if (!l) throw UsageError("unknown POI id '" + poi + "'");
  const auto opts = eval_options(config);
  std::optional<Components> comps;
  if (!user_ckpt.empty() && !poi_ckpt.empty())
    comps.emplace(components_from_checkpoints(ds, config, user_ckpt, poi_ckpt).components);
  else
    comps.emplace(train_components(ds, model_config(config), config.seeds.front(), opts.output));
  const auto json = case_report_json(ds, *comps, *u, *l, top, opts);
  art.write("case.json", json);
  out << json;
}

struct Binding {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bi-directional next-location prediction with dual-level association", "bsda"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> sets;
  std::list<Binding> bindings;
  std::string net = "both", which = "all", user_raw, poi_raw, user_ckpt, poi_ckpt;
  std::vector<std::string> synth_overrides;
  std::size_t top = 5;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_file, "key = value config file");
    sub->add_option("--set", sets, "override one config key (key=value), repeatable");
    auto bind = [&bindings, sub](const std::string& flag, const std::string& key, const std::string& help) {
      auto& b = bindings.emplace_back(Binding{key, {}, nullptr});
      b.option = sub->add_option(flag, b.value, help);
    };
    bind("-o,--out", "out", "output directory");
    return bind;
  };

  auto* ingest = app.add_subcommand("ingest", "parse, filter and split a raw check-in file");
  {
    auto bind = common(ingest);
    bind("-i,--input", "input", "tab-separated check-in file");
    bind("--format", "format", "gowalla or foursquare");
    bind("--min-user-records", "min_user_records", "drop users with fewer records");
    bind("--min-poi-records", "min_poi_records", "drop POIs with fewer records (0 = off)");
  }
  auto* synth = app.add_subcommand("synth", "generate a planted-structure synthetic dataset");
  {
    auto bind = common(synth);
    bind("--spec", "synth_spec", "synthetic spec file");
    bind("--seed", "seeds", "generator seed");
    synth->add_option("--synth", synth_overrides, "override one spec key (key=value), repeatable");
  }
  auto* train = app.add_subcommand("train", "train User-Net and/or POI-Net, write checkpoints");
  {
    auto bind = common(train);
    bind("-d,--dataset", "dataset", "dataset directory");
    bind("--seed", "seeds", "training seed");
    train->add_option("--net", net, "user, poi or both");
  }
  auto* associate = app.add_subcommand("associate", "build and export Corr_U and Corr_L");
  {
    auto bind = common(associate);
    bind("-d,--dataset", "dataset", "dataset directory");
  }
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a variant (or all) over seeds");
  {
    auto bind = common(evaluate);
    bind("-d,--dataset", "dataset", "dataset directory");
    bind("--variant", "variant", "variant name or all");
    bind("--fusion", "fusion", "maxpool, minpool, multiply, sum or add:<w_user>:<w_poi>");
    bind("--seeds", "seeds", "comma-separated seeds");
    evaluate->add_option("--user-ckpt", user_ckpt, "User-Net checkpoint (skips training)");
    evaluate->add_option("--poi-ckpt", poi_ckpt, "POI-Net checkpoint (skips training)");
  }
  auto* ablate = app.add_subcommand("ablate", "variant ablation and fusion-strategy battery");
  {
    auto bind = common(ablate);
    bind("-d,--dataset", "dataset", "dataset directory");
    bind("--seeds", "seeds", "comma-separated seeds");
  }
  auto* stats = app.add_subcommand("stats", "motivation statistics as CSV");
  {
    auto bind = common(stats);
    bind("-d,--dataset", "dataset", "dataset directory");
    stats->add_option("--which", which, "visit_counts, temporal_density, user_sim_vs_common, poi_sim_vs_common or all");
  }
  auto* kase = app.add_subcommand("case", "candidate lists for one user and one POI");
  {
    auto bind = common(kase);
    bind("-d,--dataset", "dataset", "dataset directory");
    bind("--seed", "seeds", "training seed");
    kase->add_option("--user", user_raw, "raw user id")->required();
    kase->add_option("--poi", poi_raw, "raw POI id")->required();
    kase->add_option("--top", top, "list length");
    kase->add_option("--user-ckpt", user_ckpt, "User-Net checkpoint");
    kase->add_option("--poi-ckpt", poi_ckpt, "POI-Net checkpoint");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  try {
    const auto started = std::chrono::steady_clock::now();
    RunConfig config;
    if (!config_file.empty()) apply_config_file(config, config_file);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      apply_config_key(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& b : bindings)
      if (b.option->count() > 0) apply_config_key(config, b.key, b.value);

    Artifacts art(output_dir(config, command));
    if (command == "ingest")
      cmd_ingest(config, art, out);
    else if (command == "synth")
      cmd_synth(config, synth_overrides, art, out);
    else if (command == "train")
      cmd_train(config, net, art, out);
    else if (command == "associate")
      cmd_associate(config, art, out);
    else if (command == "evaluate")
      cmd_evaluate(config, user_ckpt, poi_ckpt, art, out);
    else if (command == "ablate")
      cmd_ablate(config, art, out);
    else if (command == "stats")
      cmd_stats(config, which, art, out);
    else if (command == "case")
      cmd_case(config, user_raw, poi_raw, top, user_ckpt, poi_ckpt, art, out);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
    art.finish(command, config, elapsed.count());
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitOther;
  }
}

}  // namespace bsda
