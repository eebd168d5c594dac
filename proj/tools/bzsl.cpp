#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "bzsl/bzsl.hpp"

namespace {

void add_input_flags(CLI::App* cmd, bzsl::RunConfig& cfg) {
  cmd->add_option("--bundle", cfg.bundle_dir, "dataset bundle directory");
  cmd->add_option("--features-csv", cfg.features_csv, "features CSV (header row)");
  cmd->add_option("--attributes-csv", cfg.attributes_csv, "attributes CSV (header row)");
  cmd->add_option("--labels-txt", cfg.labels_txt, "labels file, one integer per line");
  cmd->add_option("--splits-json", cfg.splits_json, "splits JSON file");
}

void add_model_flags(CLI::App* cmd, bzsl::RunConfig& cfg, std::string& variant,
                     std::string& sigma0_from, int& pca_dim) {
  cmd->add_option("--variant", variant, "unconstrained | constrained")
      ->check(CLI::IsMember({"unconstrained", "constrained"}));
  cmd->add_option("--pca-dim", pca_dim,
                  "PCA target dimension (default 500 unconstrained, off constrained)");
  cmd->add_option("--kappa0", cfg.hp.kappa0, "meta-class mean dispersion");
  cmd->add_option("--kappa1", cfg.hp.kappa1, "class mean dispersion");
  cmd->add_option("--m", cfg.hp.m, "inverse-Wishart dof (0 = D+2)");
  cmd->add_option("--s", cfg.hp.s, "scale of the averaged class covariance");
  cmd->add_option("--K", cfg.hp.K, "support size");
  cmd->add_option("--a0", cfg.hp.a0, "inverse-Gamma shape (constrained)");
  cmd->add_option("--b0", cfg.hp.b0, "inverse-Gamma scale (constrained)");
  cmd->add_option("--sigma0-from", sigma0_from, "covariance | scatter")
      ->check(CLI::IsMember({"covariance", "scatter"}));
  cmd->add_flag("--attr-norm-l2", cfg.attr_norm_l2, "L2-normalize attributes before ranking");
  cmd->add_option("--topk", cfg.topk_list, "top-K list for the unseen pool")
      ->delimiter(',');
}

void finalize(bzsl::RunConfig& cfg, CLI::App* cmd, const std::string& variant,
              const std::string& sigma0_from, int pca_dim) {
  cfg.variant = variant == "constrained" ? bzsl::Variant::kConstrained
                                         : bzsl::Variant::kUnconstrained;
  cfg.sigma0_mode = sigma0_from == "scatter" ? bzsl::Sigma0Mode::kScatter
                                             : bzsl::Sigma0Mode::kCovariance;
  if (cmd->count("--pca-dim")) {
    cfg.pca_given = true;
    if (pca_dim > 0) cfg.pca_dim = pca_dim;
  }
  cfg.topk_given = cmd->count("--topk") > 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian zero-shot classifier over precomputed image embeddings"};
  app.require_subcommand(1);

  bzsl::RunConfig cfg;
  std::string variant = "unconstrained";
  std::string sigma0_from = "covariance";
  int pca_dim = 0;

  app.add_option("--out", cfg.out_dir, "output directory");
  app.add_option("--seed", cfg.seed, "rng seed");
  app.add_option("--threads", cfg.threads, "worker count (0 = auto)");

  auto* eval_cmd = app.add_subcommand("eval", "fit on training rows and score the test rows");
  add_input_flags(eval_cmd, cfg);
  add_model_flags(eval_cmd, cfg, variant, sigma0_from, pca_dim);
  eval_cmd->add_flag("--val-protocol", cfg.val_protocol,
                     "evaluate with val_unseen treated as unseen");

  auto* tune_cmd = app.add_subcommand("tune", "grid search on the validation split");
  add_input_flags(tune_cmd, cfg);
  add_model_flags(tune_cmd, cfg, variant, sigma0_from, pca_dim);
  tune_cmd->add_option("--grid-kappa0", cfg.grid_kappa0, "kappa0 grid")->delimiter(',');
  tune_cmd->add_option("--grid-kappa1", cfg.grid_kappa1, "kappa1 grid")->delimiter(',');
  tune_cmd->add_option("--grid-m", cfg.grid_m, "m grid")->delimiter(',');
  tune_cmd->add_option("--grid-s", cfg.grid_s, "s grid")->delimiter(',');
  tune_cmd->add_option("--grid-K", cfg.grid_K, "K grid")->delimiter(',');

  auto* sweep_cmd = app.add_subcommand("sweep", "evaluate across one hyperparameter");
  add_input_flags(sweep_cmd, cfg);
  add_model_flags(sweep_cmd, cfg, variant, sigma0_from, pca_dim);
  sweep_cmd->add_option("--param", cfg.sweep_param, "kappa0 | kappa1")->required();
  sweep_cmd->add_option("--values", cfg.sweep_values, "sweep values")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_flag("--val-protocol", cfg.val_protocol,
                      "evaluate with val_unseen treated as unseen");

  auto* ablate_cmd = app.add_subcommand("ablate", "compare full model against V1 and V2");
  add_input_flags(ablate_cmd, cfg);
  add_model_flags(ablate_cmd, cfg, variant, sigma0_from, pca_dim);
  ablate_cmd->add_option("--v2-kappa1", cfg.v2_kappa1, "forced kappa1 for the V2 run");

  auto* synth_cmd = app.add_subcommand("synth", "sample a synthetic bundle plus truth.json");
  synth_cmd->add_option("--meta-count", cfg.gen.meta_count, "meta-class count");
  synth_cmd->add_option("--classes-per-meta", cfg.gen.classes_per_meta, "classes per meta");
  synth_cmd->add_option("--samples-per-class", cfg.gen.samples_per_class, "rows per class");
  synth_cmd->add_option("--dim", cfg.gen.dim, "feature dimension");
  synth_cmd->add_option("--gen-kappa0", cfg.gen.kappa0, "generator kappa0");
  synth_cmd->add_option("--gen-kappa1", cfg.gen.kappa1, "generator kappa1");
  synth_cmd->add_option("--gen-m", cfg.gen.m, "generator m (0 = D+2)");
  synth_cmd->add_option("--attr-noise", cfg.gen.attr_noise, "attribute noise scale");
  synth_cmd->add_option("--test-fraction", cfg.gen.test_fraction, "held-out fraction per class");
  synth_cmd->add_option("--val-per-meta", cfg.gen.val_per_meta, "val classes per meta");

  auto* meta_cmd = app.add_subcommand("metaclass", "meta-class utilities");
  auto* meta_dump = meta_cmd->add_subcommand("dump", "emit the support map as JSON");
  add_input_flags(meta_dump, cfg);
  meta_dump->add_option("--K", cfg.hp.K, "support size");
  meta_dump->add_flag("--attr-norm-l2", cfg.attr_norm_l2, "L2-normalize attributes");
  meta_cmd->require_subcommand(1);

  auto* model_cmd = app.add_subcommand("model", "model file utilities");
  auto* model_dump = model_cmd->add_subcommand("dump", "fit and write the binary model file");
  add_input_flags(model_dump, cfg);
  add_model_flags(model_dump, cfg, variant, sigma0_from, pca_dim);
  model_cmd->require_subcommand(1);

  auto* import_cmd = app.add_subcommand("import", "convert CSV input into a bundle");
  add_input_flags(import_cmd, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (eval_cmd->parsed()) {
      finalize(cfg, eval_cmd, variant, sigma0_from, pca_dim);
      bzsl::run_eval(cfg);
    } else if (tune_cmd->parsed()) {
      finalize(cfg, tune_cmd, variant, sigma0_from, pca_dim);
      bzsl::run_tune(cfg);
    } else if (sweep_cmd->parsed()) {
      finalize(cfg, sweep_cmd, variant, sigma0_from, pca_dim);
      bzsl::run_sweep(cfg);
    } else if (ablate_cmd->parsed()) {
      finalize(cfg, ablate_cmd, variant, sigma0_from, pca_dim);
      bzsl::run_ablate(cfg);
    } else if (synth_cmd->parsed()) {
      bzsl::run_synth(cfg);
    } else if (meta_cmd->parsed()) {
      bzsl::run_metaclass_dump(cfg);
    } else if (model_cmd->parsed()) {
      finalize(cfg, model_dump, variant, sigma0_from, pca_dim);
      bzsl::run_model_dump(cfg);
    } else if (import_cmd->parsed()) {
      bzsl::run_import(cfg);
    }
  } catch (const bzsl::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const bzsl::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
