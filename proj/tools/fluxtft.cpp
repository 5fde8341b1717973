// fluxtft command line: one subcommand per pipeline stage plus the one-shot
// experiment runner. Exit codes: 0 ok, 1 usage, 2 data, 3 divergence.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fluxtft/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fluxtft;

namespace {

void note(const std::string& msg) { std::cerr << "[fluxtft] " << msg << '\n'; }

pipeline::ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? pipeline::ExperimentConfig::from_json(json::object()) : pipeline::ExperimentConfig::load(path);
}

std::vector<std::string> csv_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& part : text::split(s, ',')) {
    auto t = std::string(text::trim(part));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

json read_json(const fs::path& p) {
  try {
    return json::parse(text::read_file(p.string()));
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) { text::write_file(p.string(), j.dump(2) + "\n"); }

/// A trained model plus what is needed to feed it: run.json and checkpoint/.
struct Run {
  fs::path dir;
  json meta;

  bool is_tft() const { return meta.at("model").get<std::string>() == "tft"; }
  fs::path checkpoint() const { return dir / "checkpoint"; }
  ForestModel forest() const { return ForestModel::from_json(read_json(checkpoint() / "forest.json")); }

  static Run open(const std::string& dir) {
    Run r{dir, {}};
    if (!fs::exists(r.dir / "run.json")) throw DataError("not a run directory (no run.json): " + dir);
    r.meta = read_json(r.dir / "run.json");
    return r;
  }
};

/// Attaches the tree run's predictions as the estimated history of every site.
void attach_tree_history(std::vector<SiteSeries>& sites, const FeatureCatalog& cat, const Run& tree_run) {
  const ForestModel m = tree_run.forest();
  for (auto& s : sites) s.estimated_target = predict_history(m, s, cat);
}

Run tree_run_of(const Run& run) {
  if (!run.meta.contains("tree_run")) throw DataError("estimated-history run without a tree_run entry");
  return Run::open(run.meta.at("tree_run").get<std::string>());
}

int cmd_synth(int sites, int years, std::uint64_t seed, double missing, double gaps, int groups, const std::string& out) {
  synth::SynthConfig c;
  c.n_sites = sites;
  c.years = years;
  c.seed = seed;
  c.missing_frac = missing;
  c.gap_frac = gaps;
  c.n_groups = groups;
  const auto res = synth::generate_sites(c);
  fs::create_directories(out);
  save_dataset(res.dataset, out);
  write_json(fs::path(out) / "truth.json", res.truth.to_json());
  note("wrote " + std::to_string(res.dataset.sites.size()) + " sites to " + out);
  return 0;
}

int cmd_gapfill(const std::string& in, const std::string& config, const std::string& out) {
  auto cfg = load_config(config);
  cfg.data.dir = in;
  const Dataset d = pipeline::prepare_dataset(cfg, note);
  fs::create_directories(out);
  save_dataset(d, out);
  std::size_t filled = 0;
  for (const auto& s : d.sites) {
    for (auto g : s.gap_flag) filled += g;
  }
  note("gap-filled " + std::to_string(d.sites.size()) + " sites; " + std::to_string(filled) + " synthesized records");
  return 0;
}

int cmd_split(const std::string& in, const std::string& ratios, int folds, int val_fold, std::uint64_t seed,
              const std::string& out) {
  const Dataset d = load_dataset(in);
  pipeline::SplitSection s;
  const auto parts = csv_list(ratios);
  if (parts.size() != 3) throw UsageError("--ratios expects three comma-separated numbers");
  for (std::size_t i = 0; i < 3; ++i) {
    const auto v = text::parse_double(parts[i]);
    if (!v) throw UsageError("--ratios: not a number: " + parts[i]);
    s.ratios[i] = *v;
  }
  s.n_folds = folds;
  s.validation_fold = val_fold;
  s.seed = seed;
  if (val_fold < 1 || val_fold > folds) throw UsageError("--validation-fold must lie in [1, folds]");
  const auto a = pipeline::make_assignment(d.sites, s);
  for (const auto& w : a.warnings) note("warning: " + w);
  a.save(out);
  note("train " + std::to_string(a.count(Split::train)) + ", val " + std::to_string(a.count(Split::val)) + ", test " +
       std::to_string(a.count(Split::test)));
  return 0;
}

struct TrainArgs {
  std::string model = "tft", mode = "observed", config, data, split, out, tree_run, features;
  int epochs = -1;
  long long seed = -1;
};

int cmd_train(const TrainArgs& a) {
  auto cfg = load_config(a.config);
  if (a.epochs >= 0) cfg.tft.max_epochs = a.epochs;
  if (a.seed >= 0) {
    cfg.tft.seed = static_cast<std::uint64_t>(a.seed);
    cfg.trees.forest.seed = cfg.trees.boosted.seed = static_cast<std::uint64_t>(a.seed);
  }
  Dataset d = load_dataset(a.data);
  const auto split = SplitAssignment::load(a.split);
  const fs::path out(a.out);
  fs::create_directories(out / "checkpoint");
  json meta{{"model", a.model}, {"data", fs::absolute(a.data).string()}, {"split", fs::absolute(a.split).string()},
            {"encoder_length", cfg.tft.encoder_length}, {"decoder_length", cfg.tft.decoder_length}};

  if (a.model == "rfr" || a.model == "xgb") {
    const TreeConfig tc = a.model == "rfr" ? cfg.trees.forest : cfg.trees.boosted;
    const auto names = a.features.empty() ? tabular_feature_universe(d.catalog) : csv_list(a.features);
    const auto train = pipeline::select_sites(d.sites, split, Split::train);
    const ForestModel m = pipeline::fit_tree(train, d.catalog, names, tc, cfg.trees.train_stride);
    text::write_file((out / "checkpoint" / "forest.json").string(), m.to_json().dump() + "\n");
    json imp = json::array();
    for (const auto& [f, v] : feature_importance(m)) imp.push_back({{"feature", f}, {"importance", v}});
    meta["features"] = names;
    meta["importance"] = imp;
    meta["n_folds"] = cfg.split.n_folds;
    write_json(out / "run.json", meta);
    note("trained " + a.model + " on " + std::to_string(train.size()) + " sites");
    return 0;
  }
  if (a.model != "tft") throw UsageError("--model must be rfr, xgb or tft");

  const TargetHistoryMode mode = parse_mode(a.mode);
  if (mode == TargetHistoryMode::estimated) {
    if (a.tree_run.empty()) throw UsageError("--mode estimated requires --tree-run");
    const Run tr = Run::open(a.tree_run);
    if (tr.is_tft()) throw UsageError("--tree-run must point at an rfr or xgb run");
    const ForestModel fallback = tr.forest();
    int n_folds = 0;
    for (const auto& s : split.sites) n_folds = std::max(n_folds, s.fold);
    if (n_folds >= 2) {
      pipeline::attach_estimated_history(d.sites, split, d.catalog, fallback.feature_names, fallback.config,
                                         cfg.trees.train_stride, fallback, n_folds, note);
    } else {
      for (auto& s : d.sites) s.estimated_target = predict_history(fallback, s, d.catalog);
    }
    meta["tree_run"] = fs::absolute(a.tree_run).string();
  } else if (!a.tree_run.empty()) {
    throw UsageError("--tree-run only applies to --mode estimated");
  }
  const auto train = pipeline::select_sites(d.sites, split, Split::train);
  const auto val = pipeline::select_sites(d.sites, split, Split::val);
  tft::TrainHistory hist;
  tft::TftModel model = pipeline::train_tft(cfg.tft, mode, d.catalog, train, val, hist, note, "tft");
  tft::save_checkpoint(model, out / "checkpoint");
  meta["mode"] = mode_name(mode);
  meta["inputs"] = {{"encoder", InputLayout::names(model.layout().encoder)},
                    {"decoder", InputLayout::names(model.layout().decoder)},
                    {"static", InputLayout::names(model.layout().statics)}};
  write_json(out / "history.json", hist.to_json());
  write_json(out / "run.json", meta);
  return 0;
}

int cmd_evaluate(const std::string& run_dir, const std::string& data, const std::string& split_path, bool by_igbp,
                 const std::string& which, const std::string& out) {
  const Run run = Run::open(run_dir);
  Dataset d = load_dataset(data.empty() ? run.meta.at("data").get<std::string>() : data);
  const auto split = SplitAssignment::load(split_path.empty() ? run.meta.at("split").get<std::string>() : split_path);
  const Split target = parse_split(which);
  json report{{"model", run.meta.at("model")}, {"sites", split.ids(target)}, {"split", which}};
  pipeline::Scored scored;
  if (run.is_tft()) {
    const tft::TftModel model = tft::load_checkpoint(run.checkpoint());
    if (model.config().target_history_mode == TargetHistoryMode::estimated) attach_tree_history(d.sites, d.catalog, tree_run_of(run));
    scored = pipeline::score_tft(model, pipeline::select_sites(d.sites, split, target));
    report["mode"] = mode_name(model.config().target_history_mode);
    report["encoder_inputs"] = InputLayout::names(model.layout().encoder);
  } else {
    const WindowSpec spec{run.meta.at("encoder_length").get<int>(), run.meta.at("decoder_length").get<int>(),
                          run.meta.at("decoder_length").get<int>()};
    scored = pipeline::score_tree(run.forest(), pipeline::select_sites(d.sites, split, target), d.catalog, spec);
  }
  if (scored.size() == 0) throw DataError("evaluate: no scored rows");
  const MetricReport overall = scored.metrics(run.meta.at("model").get<std::string>());
  report["overall"] = overall.to_json();
  std::cout << metrics_table({overall});
  if (by_igbp) {
    const auto b = breakdown_by_group(scored.y, scored.yhat, scored.group);
    report["igbp"] = b.to_json();
    std::cout << '\n' << metrics_table(b.groups, "IGBP");
  }
  if (!out.empty()) {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_json(out, report);
  }
  return 0;
}

int cmd_interpret(const std::string& run_dir, const std::string& data, const std::string& config, const std::string& site,
                  const std::string& origin, const std::string& features, const std::string& groups, int stride,
                  const std::string& out) {
  const Run run = Run::open(run_dir);
  if (!run.is_tft()) throw UsageError("interpret: run is not a tft run");
  auto cfg = load_config(config);
  auto& ic = cfg.interpret;
  if (!origin.empty()) {
    if (!parse_timestamp(origin)) throw UsageError("--origin is not a timestamp: " + origin);
    ic.origin = origin;
  }
  if (!features.empty()) ic.features = csv_list(features);
  if (!groups.empty()) ic.groups = csv_list(groups);
  if (stride > 0) ic.snapshot_stride = stride;
  if (!origin.empty() && site.empty()) throw UsageError("--origin requires --site");
  Dataset d = load_dataset(data.empty() ? run.meta.at("data").get<std::string>() : data);
  const tft::TftModel model = tft::load_checkpoint(run.checkpoint());
  if (model.config().target_history_mode == TargetHistoryMode::estimated) attach_tree_history(d.sites, d.catalog, tree_run_of(run));
  const auto r = pipeline::interpret_model(model, d.sites, ic, site);
  pipeline::write_interpretation(r, ic, out);
  note("interpreted " + std::to_string(r.snapshots) + " windows");
  return 0;
}

int cmd_experiment(const std::string& config, const std::string& out) {
  const auto cfg = pipeline::ExperimentConfig::load(config);
  const auto r = pipeline::run_experiment(cfg, out, note);
  pipeline::write_experiment(r, out);
  std::vector<MetricReport> rows;
  for (const auto& m : r.comparison) {
    rows.push_back(m.test);
    rows.back().label = m.name;
  }
  std::cout << metrics_table(rows) << '\n' << metrics_table(r.igbp.groups, "IGBP");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fluxtft: GPP upscaling with temporal fusion transformers and tree ensembles"};
  app.require_subcommand(1);
  std::function<int()> action;

  int n_sites = 10, years = 1, groups = 8;
  std::uint64_t seed = 0;
  double missing = 0.0, gaps = 0.0;
  std::string in, out, config, ratios = "0.6,0.2,0.2", data, split, run, site, origin, features, group_list, which = "test";
  int folds = 4, val_fold = 4, stride = 0;
  bool by_igbp = false;
  TrainArgs ta;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic site collection");
  synth->add_option("--sites", n_sites, "Number of sites")->check(CLI::PositiveNumber);
  synth->add_option("--years", years, "Years per site")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--missing-frac", missing, "Fraction of feature cells set missing");
  synth->add_option("--gap-frac", gaps, "Fraction of hourly records removed");
  synth->add_option("--groups", groups, "Vegetation groups in use (1-8)");
  synth->add_option("--out", out, "Output dataset directory")->required();
  synth->callback([&] { action = [&] { return cmd_synth(n_sites, years, seed, missing, gaps, groups, out); }; });

  auto* gap = app.add_subcommand("gapfill", "Filter sites and impute missing cells and records");
  gap->add_option("--in", in, "Input dataset directory")->required();
  gap->add_option("--config", config, "Config JSON (gapfill and data sections)");
  gap->add_option("--out", out, "Output dataset directory")->required();
  gap->callback([&] { action = [&] { return cmd_gapfill(in, config, out); }; });

  auto* sp = app.add_subcommand("split", "Stratified site split with CV folds");
  sp->add_option("--in", in, "Dataset directory")->required();
  sp->add_option("--ratios", ratios, "train,val,test ratios");
  sp->add_option("--folds", folds, "CV folds over non-test sites");
  sp->add_option("--validation-fold", val_fold, "Fold used for validation (1-based)");
  sp->add_option("--seed", seed, "Random seed");
  sp->add_option("--out", out, "Output split CSV")->required();
  sp->callback([&] { action = [&] { return cmd_split(in, ratios, folds, val_fold, seed, out); }; });

  auto* tr = app.add_subcommand("train", "Train a tree model or a TFT");
  tr->add_option("--model", ta.model, "rfr, xgb or tft")->check(CLI::IsMember({"rfr", "xgb", "tft"}));
  tr->add_option("--mode", ta.mode, "Target history: observed, none or estimated")
      ->check(CLI::IsMember({"observed", "none", "estimated"}));
  tr->add_option("--config", ta.config, "Config JSON");
  tr->add_option("--data", ta.data, "Gap-filled dataset directory")->required();
  tr->add_option("--split", ta.split, "Split CSV")->required();
  tr->add_option("--out", ta.out, "Run directory")->required();
  tr->add_option("--tree-run", ta.tree_run, "Tree run supplying the estimated history");
  tr->add_option("--features", ta.features, "Tree feature columns, comma separated");
  tr->add_option("--epochs", ta.epochs, "Override tft.max_epochs");
  tr->add_option("--seed", ta.seed, "Override model seeds");
  tr->callback([&] { action = [&] { return cmd_train(ta); }; });

  auto* ev = app.add_subcommand("evaluate", "Score a run on held-out sites");
  ev->add_option("--run", run, "Run directory")->required();
  ev->add_option("--data", data, "Dataset directory (default: the training data)");
  ev->add_option("--split", split, "Split CSV (default: the training split)");
  ev->add_option("--sites", which, "Which split to score: test or val")->check(CLI::IsMember({"test", "val", "train"}));
  ev->add_flag("--by-igbp", by_igbp, "Add a per-IGBP breakdown");
  ev->add_option("--out", out, "Report JSON path");
  ev->callback([&] { action = [&] { return cmd_evaluate(run, data, split, by_igbp, which, out); }; });

  auto* in_cmd = app.add_subcommand("interpret", "Attention and variable-importance figures");
  in_cmd->add_option("--run", run, "TFT run directory")->required();
  in_cmd->add_option("--data", data, "Dataset directory (default: the training data)");
  in_cmd->add_option("--config", config, "Config JSON (experiment section)");
  in_cmd->add_option("--site", site, "Site for the snapshot figure");
  in_cmd->add_option("--origin", origin, "Prediction timestamp of the snapshot");
  in_cmd->add_option("--features", features, "Stacked-area features, comma separated");
  in_cmd->add_option("--group", group_list, "Groups for the attention figure, comma separated");
  in_cmd->add_option("--stride", stride, "Hours between captured windows");
  in_cmd->add_option("--out", out, "Output directory")->required();
  in_cmd->callback([&] {
    action = [&] { return cmd_interpret(run, data, config, site, origin, features, group_list, stride, out); };
  });

  auto* ex = app.add_subcommand("experiment", "Run the five-step comparison from one config");
  ex->add_option("--config", config, "Config JSON")->required();
  ex->add_option("--out", out, "Output directory")->required();
  ex->callback([&] { action = [&] { return cmd_experiment(config, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }
  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
