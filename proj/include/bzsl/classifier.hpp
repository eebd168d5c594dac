#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

#include "bzsl/common.hpp"
#include "bzsl/dataset.hpp"
#include "bzsl/metaclass.hpp"
#include "bzsl/parallel.hpp"
#include "bzsl/ppd.hpp"
#include "bzsl/stats.hpp"

namespace bzsl {

enum class Variant { kUnconstrained, kConstrained, kAblationV1 };

enum class Space { kGzsl, kZslUnseenOnly, kSeenOnly };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kUnconstrained: return "unconstrained";
    case Variant::kConstrained: return "constrained";
    case Variant::kAblationV1: return "ablation_v1";
  }
  return "?";
}

struct FitOptions {
  std::optional<int> pca_dim;  // applied only when < feature dim
  Sigma0Mode sigma0_mode = Sigma0Mode::kCovariance;
  bool attr_norm_l2 = false;
  unsigned threads = 0;  // 0 = hardware concurrency
};

// Gaussian used by the V1 ablation (plain per-class Gaussians, no priors).
struct GaussianComp {
  Vector mean;
  Matrix chol_lower;
  double log_det = 0.0;

  static GaussianComp from_covariance(Vector mean, const Matrix& cov) {
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("GaussianComp: covariance not positive definite even after regularization");
    }
    GaussianComp g;
    g.mean = std::move(mean);
    g.chol_lower = llt.matrixL();
    g.log_det = 2.0 * g.chol_lower.diagonal().array().log().sum();
    return g;
  }
};

struct V1Class {
  int class_id = -1;
  bool seen = false;
  std::vector<GaussianComp> comps;  // one for seen, K mixture components for unseen
};

struct Model {
  Variant variant = Variant::kUnconstrained;
  Hyperparams hp;  // resolved values (m filled in, forced kappa1 recorded)
  std::optional<PcaModel> pca;
  MetaClassMap meta;
  std::vector<ClassPpd> ppds;      // unconstrained / constrained
  std::vector<V1Class> v1_classes; // ablation_v1
  std::vector<int> seen_pool;
  std::vector<int> unseen_pool;
  int dim_raw = 0;
  int dim_model = 0;
};

struct Prediction {
  int class_id = -1;
  std::map<int, double> log_scores;
};

namespace detail {

struct FitContext {
  std::vector<int> seen;     // classes with training rows, sorted
  std::vector<int> unseen;   // sorted
  std::map<int, Matrix> train_rows;  // post-PCA rows per seen class
  std::optional<PcaModel> pca;
  MetaClassMap meta;
  int dim_raw = 0;
  int dim_model = 0;
};

inline FitContext prepare_fit(const Dataset& ds, const SplitSpec& splits,
                              int hp_k, const FitOptions& opt) {
  validate_dataset(ds);
  validate_splits(ds, splits);
  FitContext ctx;
  ctx.seen = splits.seen_pool();
  ctx.unseen = splits.unseen;
  std::sort(ctx.unseen.begin(), ctx.unseen.end());
  ctx.dim_raw = ds.feature_dim();

  const std::vector<bool> is_test = test_mask(ds, splits);
  std::map<int, std::vector<long>> rows_by_class;
  for (long r = 0; r < ds.num_rows(); ++r) {
    if (is_test[static_cast<std::size_t>(r)]) continue;
    rows_by_class[ds.labels[static_cast<std::size_t>(r)]].push_back(r);
  }
  long train_total = 0;
  for (int id : ctx.seen) {
    auto it = rows_by_class.find(id);
    if (it == rows_by_class.end() || it->second.empty()) {
      std::ostringstream msg;
      msg << "fit: seen class " << id << " has no training rows";
      throw ValidationError(msg.str());
    }
    train_total += static_cast<long>(it->second.size());
  }

  Matrix train(train_total, ds.feature_dim());
  long cursor = 0;
  std::map<int, std::pair<long, long>> spans;  // class -> [begin, count)
  for (int id : ctx.seen) {
    const auto& rows = rows_by_class[id];
    spans[id] = {cursor, static_cast<long>(rows.size())};
    for (long r : rows) train.row(cursor++) = ds.features.row(r);
  }

  if (opt.pca_dim && *opt.pca_dim < ds.feature_dim()) {
    ctx.pca = pca_fit(train, *opt.pca_dim);
    ctx.dim_model = *opt.pca_dim;
    const Matrix projected = pca_apply(*ctx.pca, train);
    for (int id : ctx.seen) {
      const auto [begin, count] = spans[id];
      ctx.train_rows[id] = projected.middleRows(begin, count);
    }
  } else {
    ctx.dim_model = ds.feature_dim();
    for (int id : ctx.seen) {
      const auto [begin, count] = spans[id];
      ctx.train_rows[id] = train.middleRows(begin, count);
    }
  }

  ctx.meta = build_meta_classes(ds, splits, hp_k, opt.attr_norm_l2);
  return ctx;
}

inline Hyperparams resolve_hyperparams(Hyperparams hp, int dim_model, Variant variant) {
  if (hp.m <= 0.0) {
    hp.m = (variant == Variant::kConstrained && hp.a0 > 0.0)
               ? 2.0 * hp.a0
               : static_cast<double>(dim_model) + 2.0;
  }
  if (!(hp.kappa0 > 0.0) || !(hp.kappa1 > 0.0) || !(hp.s > 0.0) || hp.K < 1) {
    throw ValidationError("hyperparameters must be positive (kappa0, kappa1, s, K)");
  }
  if (variant == Variant::kUnconstrained &&
      hp.m < static_cast<double>(dim_model) + 2.0) {
    std::ostringstream msg;
    msg << "hyperparameter m=" << hp.m << " below minimum feasible D+2="
        << dim_model + 2;
    throw ValidationError(msg.str());
  }
  // Bad a0/b0 surface downstream as dof or scale failures.
  return hp;
}

// Key for sharing support-set partial sums between classes whose supports
// coincide as sets.
inline std::vector<int> support_key(std::vector<int> ids) {
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace detail

inline Model fit(const Dataset& ds, const SplitSpec& splits, const Hyperparams& hp_in,
                 Variant variant, const FitOptions& opt = {}) {
  if (variant == Variant::kAblationV1) {
    throw ValidationError("fit: use fit_v1 for the ablation variant");
  }
  FitOptions options = opt;
  if (options.threads == 0) options.threads = default_threads();

  detail::FitContext ctx = detail::prepare_fit(ds, splits, hp_in.K, options);
  const Hyperparams hp = detail::resolve_hyperparams(hp_in, ctx.dim_model, variant);

  Model model;
  model.variant = variant;
  model.hp = hp;
  model.pca = ctx.pca;
  model.meta = ctx.meta;
  model.seen_pool = ctx.seen;
  model.unseen_pool = ctx.unseen;
  model.dim_raw = ctx.dim_raw;
  model.dim_model = ctx.dim_model;

  std::vector<int> all_classes = ctx.seen;
  all_classes.insert(all_classes.end(), ctx.unseen.begin(), ctx.unseen.end());
  model.ppds.resize(all_classes.size());

  // Meta posteriors are shared between classes whose support sets coincide;
  // only the rank-one cross term is per-class.
  if (variant == Variant::kUnconstrained) {
    std::map<int, ClassStats> stats;
    for (int id : ctx.seen) stats[id] = class_stats(ctx.train_rows.at(id));
    const GlobalPrior prior = global_prior(stats, hp.s, options.sigma0_mode);
    std::map<std::vector<int>, MetaPosterior> shared;
    for (int id : all_classes) {
      const auto key = detail::support_key(ctx.meta.support.at(id));
      if (shared.count(key)) continue;
      std::vector<const ClassStats*> support;
      for (int sid : key) support.push_back(&stats.at(sid));
      shared.emplace(key, meta_posterior(support, prior, hp, nullptr));
    }
    parallel_for(all_classes.size(), options.threads, [&](std::size_t i) {
      const int id = all_classes[i];
      const MetaPosterior& base = shared.at(detail::support_key(ctx.meta.support.at(id)));
      if (i < ctx.seen.size()) {
        const ClassStats& cur = stats.at(id);
        model.ppds[i] = seen_ppd(cur, with_current(base, cur), prior, hp, id);
      } else {
        model.ppds[i] = unseen_ppd(base, prior, hp, id);
      }
    });
  } else {
    std::map<int, DiagStats> stats;
    for (int id : ctx.seen) stats[id] = class_stats_diag(ctx.train_rows.at(id));
    DiagGlobalPrior prior = global_prior_diag(stats, hp.s, options.sigma0_mode);
    if (hp.b0 > 0.0) prior.sigma0 = Vector::Constant(ctx.dim_model, 2.0 * hp.b0);
    std::map<std::vector<int>, DiagMetaPosterior> shared;
    for (int id : all_classes) {
      const auto key = detail::support_key(ctx.meta.support.at(id));
      if (shared.count(key)) continue;
      std::vector<const DiagStats*> support;
      for (int sid : key) support.push_back(&stats.at(sid));
      shared.emplace(key, meta_posterior_diag(support, prior, hp, nullptr));
    }
    parallel_for(all_classes.size(), options.threads, [&](std::size_t i) {
      const int id = all_classes[i];
      const DiagMetaPosterior& base = shared.at(detail::support_key(ctx.meta.support.at(id)));
      if (i < ctx.seen.size()) {
        const DiagStats& cur = stats.at(id);
        model.ppds[i] = seen_ppd_diag(cur, with_current(base, cur), prior, hp, id);
      } else {
        model.ppds[i] = unseen_ppd_diag(base, prior, hp, id);
      }
    });
  }
  return model;
}

// Ablation V1, the non-Bayesian baseline: each seen class a single Gaussian
// with regularized sample covariance, each unseen class an equal-weight
// mixture of its K support Gaussians.
inline Model fit_v1(const Dataset& ds, const SplitSpec& splits, const Hyperparams& hp_in,
                    const FitOptions& opt = {}) {
  FitOptions options = opt;
  if (options.threads == 0) options.threads = default_threads();
  detail::FitContext ctx = detail::prepare_fit(ds, splits, hp_in.K, options);
  const Hyperparams hp = detail::resolve_hyperparams(hp_in, ctx.dim_model, Variant::kUnconstrained);

  Model model;
  model.variant = Variant::kAblationV1;
  model.hp = hp;
  model.pca = ctx.pca;
  model.meta = ctx.meta;
  model.seen_pool = ctx.seen;
  model.unseen_pool = ctx.unseen;
  model.dim_raw = ctx.dim_raw;
  model.dim_model = ctx.dim_model;

  std::map<int, GaussianComp> seen_gaussians;
  for (int id : ctx.seen) {
    const ClassStats st = class_stats(ctx.train_rows.at(id));
    Matrix cov = st.count > 1 ? Matrix(st.scatter / static_cast<double>(st.count - 1))
                              : Matrix(Matrix::Zero(st.mean.size(), st.mean.size()));
    const double eps = 1e-6 * cov.trace() / static_cast<double>(cov.rows());
    cov += eps * Matrix::Identity(cov.rows(), cov.cols());
    seen_gaussians[id] = GaussianComp::from_covariance(st.mean, cov);
  }
  for (int id : ctx.seen) {
    model.v1_classes.push_back(V1Class{id, true, {seen_gaussians.at(id)}});
  }
  for (int id : ctx.unseen) {
    V1Class cls{id, false, {}};
    for (int sid : ctx.meta.support.at(id)) cls.comps.push_back(seen_gaussians.at(sid));
    model.v1_classes.push_back(std::move(cls));
  }
  return model;
}

// Ablation V2: the full pipeline with kappa1 forced to a degenerate value,
// collapsing the distinction between class and meta-class dispersion.
inline Model fit_v2(const Dataset& ds, const SplitSpec& splits, Hyperparams hp,
                    Variant base = Variant::kUnconstrained, double forced_kappa1 = 1e-3,
                    const FitOptions& opt = {}) {
  hp.kappa1 = forced_kappa1;
  return fit(ds, splits, hp, base, opt);
}

namespace detail {

inline double score_class(const Model& model, const Eigen::Ref<const Vector>& z, std::size_t idx) {
  if (model.variant == Variant::kAblationV1) {
    const V1Class& cls = model.v1_classes[idx];
    if (cls.comps.size() == 1) {
      return mvn_logpdf(z, cls.comps[0].mean, cls.comps[0].chol_lower, cls.comps[0].log_det);
    }
    double top = -std::numeric_limits<double>::infinity();
    std::vector<double> parts;
    parts.reserve(cls.comps.size());
    for (const auto& comp : cls.comps) {
      parts.push_back(mvn_logpdf(z, comp.mean, comp.chol_lower, comp.log_det));
      top = std::max(top, parts.back());
    }
    double sum = 0.0;
    for (double p : parts) sum += std::exp(p - top);
    return top + std::log(sum) - std::log(static_cast<double>(parts.size()));
  }
  return student_t_logpdf(z, model.ppds[idx].t);
}

template <typename ClassLike>
inline bool in_space(const ClassLike& cls, Space space) {
  switch (space) {
    case Space::kGzsl: return true;
    case Space::kZslUnseenOnly: return !cls.seen;
    case Space::kSeenOnly: return cls.seen;
  }
  return true;
}

}  // namespace detail

inline Prediction predict(const Model& model, const Eigen::Ref<const Vector>& x,
                          Space space = Space::kGzsl) {
  if (x.size() != model.dim_raw) {
    std::ostringstream msg;
    msg << "predict: input dimension " << x.size() << " does not match model " << model.dim_raw;
    throw ValidationError(msg.str());
  }
  const Vector z = model.pca ? pca_apply_vec(*model.pca, x) : Vector(x);
  Prediction pred;
  const std::size_t n_classes = model.variant == Variant::kAblationV1
                                    ? model.v1_classes.size()
                                    : model.ppds.size();
  for (std::size_t i = 0; i < n_classes; ++i) {
    const int id = model.variant == Variant::kAblationV1 ? model.v1_classes[i].class_id
                                                         : model.ppds[i].class_id;
    const bool ok = model.variant == Variant::kAblationV1
                        ? detail::in_space(model.v1_classes[i], space)
                        : detail::in_space(model.ppds[i], space);
    if (!ok) continue;
    pred.log_scores[id] = detail::score_class(model, z, i);
  }
  if (pred.log_scores.empty()) throw ValidationError("predict: empty search space");
  // Argmax with ties broken by ascending class id; std::map iterates ascending.
  pred.class_id = pred.log_scores.begin()->first;
  double best = pred.log_scores.begin()->second;
  for (const auto& [id, score] : pred.log_scores) {
    if (score > best) {
      best = score;
      pred.class_id = id;
    }
  }
  return pred;
}

inline std::vector<Prediction> predict_batch(const Model& model, const Matrix& rows,
                                             Space space = Space::kGzsl, unsigned threads = 0) {
  if (threads == 0) threads = default_threads();
  std::vector<Prediction> preds(static_cast<std::size_t>(rows.rows()));
  parallel_for(preds.size(), threads, [&](std::size_t i) {
    preds[i] = predict(model, rows.row(static_cast<Eigen::Index>(i)).transpose(), space);
  });
  return preds;
}

}  // namespace bzsl
