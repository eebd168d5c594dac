#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bzsl/classifier.hpp"
#include "bzsl/common.hpp"
#include "bzsl/dataset.hpp"
#include "bzsl/eval.hpp"
#include "bzsl/metaclass.hpp"
#include "bzsl/model_io.hpp"
#include "bzsl/synth.hpp"

namespace bzsl {

struct RunConfig {
  std::string bundle_dir;
  // CSV import alternative to --bundle.
  std::string features_csv;
  std::string attributes_csv;
  std::string labels_txt;
  std::string splits_json;

  Variant variant = Variant::kUnconstrained;
  Hyperparams hp;
  std::optional<int> pca_dim;  // resolved per variant when unset
  bool pca_given = false;
  Sigma0Mode sigma0_mode = Sigma0Mode::kCovariance;
  bool attr_norm_l2 = false;
  std::string out_dir;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool val_protocol = false;
  std::vector<int> topk_list = {1, 5, 10};
  bool topk_given = false;

  // tune grids; empty = spec default grid
  std::vector<double> grid_kappa0;
  std::vector<double> grid_kappa1;
  std::vector<double> grid_m;
  std::vector<double> grid_s;
  std::vector<int> grid_K;

  std::string sweep_param;  // kappa0 | kappa1
  std::vector<double> sweep_values;

  double v2_kappa1 = 1e-3;

  GenSpec gen;
};

namespace cli_detail {

inline Bundle load_input(const RunConfig& cfg) {
  if (!cfg.bundle_dir.empty()) return load_bundle(cfg.bundle_dir);
  if (!cfg.features_csv.empty()) {
    if (cfg.attributes_csv.empty() || cfg.labels_txt.empty() || cfg.splits_json.empty()) {
      throw ValidationError(
          "CSV input needs --features-csv, --attributes-csv, --labels-txt and --splits-json");
    }
    return bundle_from_csv(cfg.features_csv, cfg.attributes_csv, cfg.labels_txt,
                           cfg.splits_json);
  }
  throw ValidationError("no input: pass --bundle or the CSV import flags");
}

inline FitOptions fit_options(const RunConfig& cfg, const Dataset& ds) {
  FitOptions opt;
  if (cfg.pca_given) {
    opt.pca_dim = cfg.pca_dim;
  } else if (cfg.variant == Variant::kUnconstrained) {
    opt.pca_dim = 500;  // applied only when below the feature dimension
  }
  if (opt.pca_dim && *opt.pca_dim >= ds.feature_dim()) opt.pca_dim.reset();
  opt.sigma0_mode = cfg.sigma0_mode;
  opt.attr_norm_l2 = cfg.attr_norm_l2;
  opt.threads = cfg.threads;
  return opt;
}

// Which rows to score and under which pools. The validation protocol refits
// with val_unseen treated as unseen; the final protocol uses the test rows.
struct EvalSetup {
  SplitSpec fit_splits;
  std::vector<long> eval_rows;
  std::set<int> seen_pool;
  std::set<int> unseen_pool;
};

inline EvalSetup final_setup(const Dataset& ds, const SplitSpec& splits) {
  EvalSetup setup;
  setup.fit_splits = splits;
  const std::vector<bool> is_test = test_mask(ds, splits);
  for (long r = 0; r < ds.num_rows(); ++r) {
    if (is_test[static_cast<std::size_t>(r)]) setup.eval_rows.push_back(r);
  }
  const auto pool = splits.seen_pool();
  setup.seen_pool.insert(pool.begin(), pool.end());
  setup.unseen_pool.insert(splits.unseen.begin(), splits.unseen.end());
  if (setup.eval_rows.empty()) throw ValidationError("no test rows under this split");
  return setup;
}

inline EvalSetup validation_setup(const Dataset& ds, const SplitSpec& splits) {
  if (splits.val_unseen.empty()) {
    throw ValidationError("tuning requires a val_unseen split");
  }
  EvalSetup setup;
  setup.fit_splits.seen_train = splits.seen_train;
  setup.fit_splits.unseen = splits.val_unseen;
  setup.fit_splits.test_index = splits.test_index;
  setup.seen_pool.insert(splits.seen_train.begin(), splits.seen_train.end());
  setup.unseen_pool.insert(splits.val_unseen.begin(), splits.val_unseen.end());

  const std::vector<bool> is_test = test_mask(ds, splits);
  std::vector<long> seen_holdout, seen_train_rows;
  for (long r = 0; r < ds.num_rows(); ++r) {
    const int label = ds.labels[static_cast<std::size_t>(r)];
    if (setup.unseen_pool.count(label)) {
      setup.eval_rows.push_back(r);  // every row of a val class scores as unseen
    } else if (setup.seen_pool.count(label)) {
      (is_test[static_cast<std::size_t>(r)] ? seen_holdout : seen_train_rows).push_back(r);
    }
  }
  // Seen-side accuracy prefers held-out rows; falls back to resubstitution
  // when the bundle carries no seen test rows.
  const auto& seen_rows = seen_holdout.empty() ? seen_train_rows : seen_holdout;
  setup.eval_rows.insert(setup.eval_rows.end(), seen_rows.begin(), seen_rows.end());
  std::sort(setup.eval_rows.begin(), setup.eval_rows.end());
  return setup;
}

inline std::vector<int> usable_topk(const RunConfig& cfg, std::size_t n_candidates) {
  std::vector<int> ks;
  for (int k : cfg.topk_list) {
    if (k >= 1 && static_cast<std::size_t>(k) <= n_candidates) {
      ks.push_back(k);
    } else if (cfg.topk_given) {
      std::ostringstream msg;
      msg << "topk: k=" << k << " exceeds candidate count " << n_candidates;
      throw ValidationError(msg.str());
    }
  }
  return ks;
}

struct EvalOutcome {
  EvalReport report;
  std::vector<Prediction> preds;
  std::vector<long> rows;
  std::vector<int> truths;
};

inline EvalOutcome run_protocol(const Dataset& ds, const EvalSetup& setup, const Model& model,
                                const RunConfig& cfg) {
  Matrix eval_feats(static_cast<Eigen::Index>(setup.eval_rows.size()), ds.feature_dim());
  std::vector<int> truths(setup.eval_rows.size());
  for (std::size_t i = 0; i < setup.eval_rows.size(); ++i) {
    eval_feats.row(static_cast<Eigen::Index>(i)) = ds.features.row(setup.eval_rows[i]);
    truths[i] = ds.labels[static_cast<std::size_t>(setup.eval_rows[i])];
  }
  EvalOutcome out;
  out.preds = predict_batch(model, eval_feats, Space::kGzsl,
                            cfg.threads ? cfg.threads : default_threads());
  const std::size_t n_candidates =
      out.preds.empty() ? 0 : out.preds.front().log_scores.size();
  out.report = evaluate(out.preds, truths, setup.seen_pool, setup.unseen_pool,
                        usable_topk(cfg, n_candidates));
  out.rows = setup.eval_rows;
  out.truths = std::move(truths);
  return out;
}

inline void ensure_out_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
}

inline void write_predictions_csv(const std::filesystem::path& path, const EvalOutcome& out) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ValidationError("cannot open for writing: " + path.string());
  f << "row_index,predicted_class,true_class,log_score\n";
  for (std::size_t i = 0; i < out.preds.size(); ++i) {
    f << out.rows[i] << "," << out.preds[i].class_id << "," << out.truths[i] << ","
      << std::setprecision(17) << out.preds[i].log_scores.at(out.preds[i].class_id) << "\n";
  }
}

}  // namespace cli_detail

inline EvalReport run_eval(const RunConfig& cfg, std::ostream& log = std::cout) {
  const Bundle bundle = cli_detail::load_input(cfg);
  const cli_detail::EvalSetup setup =
      cfg.val_protocol ? cli_detail::validation_setup(bundle.dataset, bundle.splits)
                       : cli_detail::final_setup(bundle.dataset, bundle.splits);
  const Model model = fit(bundle.dataset, setup.fit_splits, cfg.hp, cfg.variant,
                          cli_detail::fit_options(cfg, bundle.dataset));
  const cli_detail::EvalOutcome out =
      cli_detail::run_protocol(bundle.dataset, setup, model, cfg);
  log << report_table(out.report, variant_name(cfg.variant));
  if (!cfg.out_dir.empty()) {
    cli_detail::ensure_out_dir(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    std::ofstream(dir / "report.json") << report_json(out.report).dump(2) << "\n";
    std::ofstream(dir / "report.txt") << report_table(out.report, variant_name(cfg.variant));
    cli_detail::write_predictions_csv(dir / "predictions.csv", out);
  }
  return out.report;
}

struct TuneRow {
  Hyperparams hp;
  double ts = 0.0;
  double tr = 0.0;
  double H = 0.0;
};

struct TuneResult {
  TuneRow best;
  std::vector<TuneRow> leaderboard;  // sorted: H desc, ts desc, hp ascending
};

inline TuneResult run_tune(const RunConfig& cfg, std::ostream& log = std::cout) {
  const Bundle bundle = cli_detail::load_input(cfg);
  const cli_detail::EvalSetup setup =
      cli_detail::validation_setup(bundle.dataset, bundle.splits);
  const FitOptions base_opt = cli_detail::fit_options(cfg, bundle.dataset);
  const int dim_model = base_opt.pca_dim ? *base_opt.pca_dim : bundle.dataset.feature_dim();

  std::vector<double> g_k0 = cfg.grid_kappa0.empty() ? std::vector<double>{0.01, 0.1, 1.0}
                                                     : cfg.grid_kappa0;
  std::vector<double> g_k1 = cfg.grid_kappa1.empty() ? std::vector<double>{1.0, 5.0, 10.0, 25.0}
                                                     : cfg.grid_kappa1;
  std::vector<double> g_m =
      cfg.grid_m.empty()
          ? std::vector<double>{static_cast<double>(dim_model) + 2.0, 5.0 * dim_model,
                                25.0 * dim_model}
          : cfg.grid_m;
  std::vector<double> g_s = cfg.grid_s.empty() ? std::vector<double>{1.0, 5.0, 10.0} : cfg.grid_s;
  std::vector<int> g_K = cfg.grid_K.empty() ? std::vector<int>{1, 2, 3, 5, 10} : cfg.grid_K;
  // Support selection needs K+1 seen classes under the validation protocol.
  const int max_k = static_cast<int>(setup.fit_splits.seen_train.size()) - 1;
  std::erase_if(g_K, [&](int k) { return k > max_k; });
  if (g_K.empty()) throw ValidationError("tune: no grid K fits the seen class count");

  std::vector<Hyperparams> grid;
  for (double k0 : g_k0)
    for (double k1 : g_k1)
      for (double m : g_m)
        for (double s : g_s)
          for (int k : g_K) {
            Hyperparams hp = cfg.hp;
            hp.kappa0 = k0;
            hp.kappa1 = k1;
            hp.m = m;
            hp.s = s;
            hp.K = k;
            grid.push_back(hp);
          }
  if (grid.empty()) throw ValidationError("tune: empty grid");

  std::vector<TuneRow> rows(grid.size());
  FitOptions point_opt = base_opt;
  point_opt.threads = 1;  // grid points are the parallel unit
  RunConfig point_cfg = cfg;
  point_cfg.threads = 1;
  parallel_for(grid.size(), cfg.threads ? cfg.threads : default_threads(), [&](std::size_t i) {
    const Model model = fit(bundle.dataset, setup.fit_splits, grid[i], cfg.variant, point_opt);
    const cli_detail::EvalOutcome out =
        cli_detail::run_protocol(bundle.dataset, setup, model, point_cfg);
    rows[i] = TuneRow{grid[i], out.report.ts, out.report.tr, out.report.H};
  });

  auto hp_tuple = [](const Hyperparams& hp) {
    return std::make_tuple(hp.kappa0, hp.kappa1, hp.m, hp.s, hp.K);
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const TuneRow& a, const TuneRow& b) {
    if (a.H != b.H) return a.H > b.H;
    if (a.ts != b.ts) return a.ts > b.ts;
    return hp_tuple(a.hp) < hp_tuple(b.hp);
  });

  TuneResult result;
  result.leaderboard = rows;
  result.best = rows.front();
  log << "best: kappa0=" << result.best.hp.kappa0 << " kappa1=" << result.best.hp.kappa1
      << " m=" << result.best.hp.m << " s=" << result.best.hp.s << " K=" << result.best.hp.K
      << " H=" << result.best.H << " (ts=" << result.best.ts << ", tr=" << result.best.tr
      << ")\n";

  if (!cfg.out_dir.empty()) {
    cli_detail::ensure_out_dir(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    std::ofstream f(dir / "leaderboard.csv", std::ios::trunc);
    f << "kappa0,kappa1,m,s,K,ts,tr,H\n";
    for (const TuneRow& row : rows) {
      f << row.hp.kappa0 << "," << row.hp.kappa1 << "," << row.hp.m << "," << row.hp.s << ","
        << row.hp.K << "," << std::setprecision(17) << row.ts << "," << row.tr << "," << row.H
        << "\n";
    }
    nlohmann::json best;
    best["kappa0"] = result.best.hp.kappa0;
    best["kappa1"] = result.best.hp.kappa1;
    best["m"] = result.best.hp.m;
    best["s"] = result.best.hp.s;
    best["K"] = result.best.hp.K;
    best["ts"] = result.best.ts;
    best["tr"] = result.best.tr;
    best["H"] = result.best.H;
    std::ofstream(dir / "best.json") << best.dump(2) << "\n";
  }
  return result;
}

struct SweepRow {
  double value = 0.0;
  double ts = 0.0;
  double tr = 0.0;
  double H = 0.0;
};

inline std::vector<SweepRow> run_sweep(const RunConfig& cfg, std::ostream& log = std::cout) {
  if (cfg.sweep_param != "kappa0" && cfg.sweep_param != "kappa1") {
    throw ValidationError("sweep: parameter must be kappa0 or kappa1");
  }
  if (cfg.sweep_values.empty()) throw ValidationError("sweep: no values given");
  const Bundle bundle = cli_detail::load_input(cfg);
  const cli_detail::EvalSetup setup =
      cfg.val_protocol ? cli_detail::validation_setup(bundle.dataset, bundle.splits)
                       : cli_detail::final_setup(bundle.dataset, bundle.splits);
  const FitOptions base_opt = cli_detail::fit_options(cfg, bundle.dataset);

  std::vector<SweepRow> rows(cfg.sweep_values.size());
  FitOptions point_opt = base_opt;
  point_opt.threads = 1;
  RunConfig point_cfg = cfg;
  point_cfg.threads = 1;
  parallel_for(rows.size(), cfg.threads ? cfg.threads : default_threads(), [&](std::size_t i) {
    Hyperparams hp = cfg.hp;
    if (cfg.sweep_param == "kappa0") {
      hp.kappa0 = cfg.sweep_values[i];
    } else {
      hp.kappa1 = cfg.sweep_values[i];
    }
    const Model model = fit(bundle.dataset, setup.fit_splits, hp, cfg.variant, point_opt);
    const cli_detail::EvalOutcome out =
        cli_detail::run_protocol(bundle.dataset, setup, model, point_cfg);
    rows[i] = SweepRow{cfg.sweep_values[i], out.report.ts, out.report.tr, out.report.H};
  });

  log << cfg.sweep_param << ",ts,tr,H\n" << std::setprecision(6);
  for (const SweepRow& row : rows) {
    log << row.value << "," << row.ts << "," << row.tr << "," << row.H << "\n";
  }
  if (!cfg.out_dir.empty()) {
    cli_detail::ensure_out_dir(cfg.out_dir);
    std::ofstream f(std::filesystem::path(cfg.out_dir) / "sweep.csv", std::ios::trunc);
    f << cfg.sweep_param << ",ts,tr,H\n";
    for (const SweepRow& row : rows) {
      f << std::setprecision(17) << row.value << "," << row.ts << "," << row.tr << ","
        << row.H << "\n";
    }
  }
  return rows;
}

struct AblateRow {
  std::string name;
  double ts = 0.0;
  double tr = 0.0;
  double H = 0.0;
};

inline std::vector<AblateRow> run_ablate(const RunConfig& cfg, std::ostream& log = std::cout) {
  const Bundle bundle = cli_detail::load_input(cfg);
  const cli_detail::EvalSetup setup =
      cfg.val_protocol ? cli_detail::validation_setup(bundle.dataset, bundle.splits)
                       : cli_detail::final_setup(bundle.dataset, bundle.splits);
  const FitOptions opt = cli_detail::fit_options(cfg, bundle.dataset);

  std::vector<AblateRow> rows;
  auto push = [&](const std::string& name, const Model& model) {
    const cli_detail::EvalOutcome out =
        cli_detail::run_protocol(bundle.dataset, setup, model, cfg);
    rows.push_back(AblateRow{name, out.report.ts, out.report.tr, out.report.H});
  };
  push("full", fit(bundle.dataset, setup.fit_splits, cfg.hp, cfg.variant, opt));
  push("v1", fit_v1(bundle.dataset, setup.fit_splits, cfg.hp, opt));
  push("v2", fit_v2(bundle.dataset, setup.fit_splits, cfg.hp, cfg.variant, cfg.v2_kappa1, opt));

  std::ostringstream table;
  table << std::left << std::setw(8) << "model" << std::right << std::setw(8) << "ts"
        << std::setw(8) << "tr" << std::setw(8) << "H" << "\n";
  for (const AblateRow& row : rows) {
    table << std::left << std::setw(8) << row.name << std::right << std::fixed
          << std::setprecision(1) << std::setw(8) << 100.0 * row.ts << std::setw(8)
          << 100.0 * row.tr << std::setw(8) << 100.0 * row.H << "\n";
  }
  log << table.str();
  if (!cfg.out_dir.empty()) {
    cli_detail::ensure_out_dir(cfg.out_dir);
    std::ofstream f(std::filesystem::path(cfg.out_dir) / "ablate.csv", std::ios::trunc);
    f << "model,ts,tr,H\n";
    for (const AblateRow& row : rows) {
      f << row.name << "," << std::setprecision(17) << row.ts << "," << row.tr << "," << row.H
        << "\n";
    }
  }
  return rows;
}

inline void run_synth(const RunConfig& cfg, std::ostream& log = std::cout) {
  if (cfg.out_dir.empty()) throw ValidationError("synth: --out directory required");
  GenSpec gen = cfg.gen;
  gen.seed = cfg.seed;
  const SynthData data = sample_dataset(gen);
  save_bundle(data.dataset, data.splits, cfg.out_dir);
  std::ofstream(std::filesystem::path(cfg.out_dir) / "truth.json")
      << truth_json(data).dump(2) << "\n";
  log << "wrote bundle with " << data.dataset.num_rows() << " rows, "
      << data.dataset.num_classes() << " classes to " << cfg.out_dir << "\n";
}

inline nlohmann::json run_metaclass_dump(const RunConfig& cfg, std::ostream& log = std::cout) {
  const Bundle bundle = cli_detail::load_input(cfg);
  const MetaClassMap map =
      build_meta_classes(bundle.dataset, bundle.splits, cfg.hp.K, cfg.attr_norm_l2);
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, support] : map.support) {
    nlohmann::json entry;
    entry["support"] = support;
    entry["distances"] = map.distances.at(id);
    j[std::to_string(id)] = entry;
  }
  if (!cfg.out_dir.empty()) {
    cli_detail::ensure_out_dir(cfg.out_dir);
    std::ofstream(std::filesystem::path(cfg.out_dir) / "metaclass.json") << j.dump(2) << "\n";
  } else {
    log << j.dump(2) << "\n";
  }
  return j;
}

inline void run_model_dump(const RunConfig& cfg, std::ostream& log = std::cout) {
  if (cfg.out_dir.empty()) throw ValidationError("model dump: --out directory required");
  const Bundle bundle = cli_detail::load_input(cfg);
  const Model model = fit(bundle.dataset, bundle.splits, cfg.hp, cfg.variant,
                          cli_detail::fit_options(cfg, bundle.dataset));
  cli_detail::ensure_out_dir(cfg.out_dir);
  const std::filesystem::path path = std::filesystem::path(cfg.out_dir) / "model.bin";
  save_model(model, path);
  log << "wrote " << model.ppds.size() << " class records to " << path.string() << "\n";
}

inline void run_import(const RunConfig& cfg, std::ostream& log = std::cout) {
  if (cfg.out_dir.empty()) throw ValidationError("import: --out directory required");
  if (cfg.features_csv.empty()) throw ValidationError("import: CSV flags required");
  const Bundle bundle = cli_detail::load_input(cfg);
  save_bundle(bundle.dataset, bundle.splits, cfg.out_dir);
  log << "imported " << bundle.dataset.num_rows() << " rows into " << cfg.out_dir << "\n";
}

}  // namespace bzsl
