#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include <json.hpp>

#include "bzsl/common.hpp"
#include "bzsl/dataset.hpp"
#include "bzsl/ppd.hpp"
#include "bzsl/rng.hpp"
#include "bzsl/stats.hpp"

namespace bzsl {

// Hierarchical generator: per meta-class j, Sigma_j ~ IW(sigma0, m) and
// mu_j ~ N(mu0, Sigma_j/kappa0); per class i of meta j,
// mu_ji ~ N(mu_j, Sigma_j/kappa1); rows ~ N(mu_ji, Sigma_j).
// Class attributes are the true meta mean plus small noise, so attribute
// similarity mirrors the latent hierarchy.
struct GenSpec {
  int meta_count = 5;
  int classes_per_meta = 4;
  int samples_per_class = 100;
  int dim = 10;
  double kappa0 = 0.05;
  double kappa1 = 20.0;
  double m = 0.0;      // 0 resolves to dim + 2
  Matrix sigma0;       // empty resolves to identity
  Vector mu0;          // empty resolves to zero
  std::uint64_t seed = 0;
  double attr_noise = 0.05;
  double test_fraction = 0.2;  // held-out fraction of each seen-pool class
  int val_per_meta = 0;        // seen classes per meta marked val_unseen
};

struct MetaTruth {
  Vector mu;
  Matrix sigma;
};

struct ClassTruth {
  int class_id = -1;
  int meta_id = -1;
  Vector mu;
  bool unseen = false;
  bool val = false;
};

struct SynthData {
  Dataset dataset;
  SplitSpec splits;
  std::vector<MetaTruth> metas;
  std::vector<ClassTruth> classes;
};

namespace detail {

// Bartlett construction: with sigma0 = Ls*Ls^T and A the Bartlett factor of
// W(I, m), Sigma = G*G^T for G = Ls * A^{-T} follows IW(sigma0, m).
inline Matrix sample_inverse_wishart_factor(Rng& rng, const Matrix& chol_sigma0, double m) {
  const Eigen::Index dim = chol_sigma0.rows();
  if (!(m > static_cast<double>(dim) - 1.0)) {
    throw NumericalError("inverse-Wishart sample requires m > D - 1");
  }
  Matrix a = Matrix::Zero(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(m - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Matrix a_inv =
      a.template triangularView<Eigen::Lower>().solve(Matrix::Identity(dim, dim));
  return chol_sigma0 * a_inv.transpose();
}

inline Vector sample_normal_vec(Rng& rng, Eigen::Index dim) {
  Vector z(dim);
  for (Eigen::Index i = 0; i < dim; ++i) z(i) = rng.normal();
  return z;
}

}  // namespace detail

inline SynthData sample_dataset(const GenSpec& spec) {
  if (spec.meta_count < 1 || spec.classes_per_meta < 2 || spec.samples_per_class < 1 ||
      spec.dim < 1) {
    throw ValidationError("sample_dataset: invalid counts");
  }
  if (spec.val_per_meta < 0 || spec.val_per_meta > spec.classes_per_meta - 2) {
    throw ValidationError("sample_dataset: val_per_meta leaves no seen training class");
  }
  const int dim = spec.dim;
  const double m = spec.m > 0.0 ? spec.m : static_cast<double>(dim) + 2.0;
  Matrix sigma0 = spec.sigma0.size() ? spec.sigma0 : Matrix::Identity(dim, dim);
  Vector mu0 = spec.mu0.size() ? spec.mu0 : Vector::Zero(dim);
  if (sigma0.rows() != dim || sigma0.cols() != dim || mu0.size() != dim) {
    throw ValidationError("sample_dataset: sigma0/mu0 dimensions disagree with dim");
  }
  Eigen::LLT<Matrix> llt(sigma0);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("sample_dataset: sigma0 is not positive definite");
  }
  const Matrix chol_sigma0 = llt.matrixL();

  const int num_classes = spec.meta_count * spec.classes_per_meta;
  const long rows_total = static_cast<long>(num_classes) * spec.samples_per_class;
  SynthData out;
  out.dataset.features.resize(rows_total, dim);
  out.dataset.attributes.resize(num_classes, dim);
  out.dataset.labels.resize(static_cast<std::size_t>(rows_total));
  out.metas.resize(static_cast<std::size_t>(spec.meta_count));
  out.classes.resize(static_cast<std::size_t>(num_classes));

  std::vector<long> test_rows;
  const int test_per_class = std::min(
      spec.samples_per_class,
      static_cast<int>(std::lround(spec.test_fraction * spec.samples_per_class)));

  for (int j = 0; j < spec.meta_count; ++j) {
    Rng meta_rng(stream_key(spec.seed, 0xAFF1E5ULL, static_cast<std::uint64_t>(j)));
    MetaTruth& meta = out.metas[static_cast<std::size_t>(j)];
    const Matrix g = detail::sample_inverse_wishart_factor(meta_rng, chol_sigma0, m);
    meta.sigma = g * g.transpose();
    meta.sigma = ((meta.sigma + meta.sigma.transpose()) * 0.5).eval();
    meta.mu = mu0 + g * detail::sample_normal_vec(meta_rng, dim) / std::sqrt(spec.kappa0);

    for (int i = 0; i < spec.classes_per_meta; ++i) {
      const int class_id = j * spec.classes_per_meta + i;
      Rng class_rng(stream_key(spec.seed, 0xC1A55ULL, static_cast<std::uint64_t>(j),
                               static_cast<std::uint64_t>(i)));
      ClassTruth& cls = out.classes[static_cast<std::size_t>(class_id)];
      cls.class_id = class_id;
      cls.meta_id = j;
      cls.mu = meta.mu + g * detail::sample_normal_vec(class_rng, dim) / std::sqrt(spec.kappa1);
      cls.unseen = (i == spec.classes_per_meta - 1);
      cls.val = (!cls.unseen && i >= spec.classes_per_meta - 1 - spec.val_per_meta);

      const long row0 = static_cast<long>(class_id) * spec.samples_per_class;
      for (int r = 0; r < spec.samples_per_class; ++r) {
        out.dataset.features.row(row0 + r) =
            (cls.mu + g * detail::sample_normal_vec(class_rng, dim)).transpose();
        out.dataset.labels[static_cast<std::size_t>(row0 + r)] = class_id;
      }
      out.dataset.attributes.row(class_id) =
          (meta.mu + spec.attr_noise * detail::sample_normal_vec(class_rng, dim)).transpose();

      if (cls.unseen) {
        out.splits.unseen.push_back(class_id);
        for (int r = 0; r < spec.samples_per_class; ++r) test_rows.push_back(row0 + r);
      } else {
        if (cls.val) {
          out.splits.val_unseen.push_back(class_id);
        } else {
          out.splits.seen_train.push_back(class_id);
        }
        for (int r = spec.samples_per_class - test_per_class; r < spec.samples_per_class; ++r) {
          test_rows.push_back(row0 + r);
        }
      }
    }
  }
  std::sort(test_rows.begin(), test_rows.end());
  out.splits.test_index = std::move(test_rows);
  quantize_to_storage(out.dataset.features);
  quantize_to_storage(out.dataset.attributes);
  validate_dataset(out.dataset);
  validate_splits(out.dataset, out.splits);
  return out;
}

inline nlohmann::json truth_json(const SynthData& data) {
  nlohmann::json j;
  j["metas"] = nlohmann::json::array();
  for (const auto& meta : data.metas) {
    nlohmann::json mj;
    mj["mu"] = std::vector<double>(meta.mu.data(), meta.mu.data() + meta.mu.size());
    std::vector<std::vector<double>> sigma;
    for (Eigen::Index r = 0; r < meta.sigma.rows(); ++r) {
      sigma.emplace_back(meta.sigma.row(r).begin(), meta.sigma.row(r).end());
    }
    mj["sigma"] = sigma;
    j["metas"].push_back(mj);
  }
  j["classes"] = nlohmann::json::array();
  for (const auto& cls : data.classes) {
    nlohmann::json cj;
    cj["class_id"] = cls.class_id;
    cj["meta_id"] = cls.meta_id;
    cj["mu"] = std::vector<double>(cls.mu.data(), cls.mu.data() + cls.mu.size());
    cj["unseen"] = cls.unseen;
    cj["val"] = cls.val;
    j["classes"].push_back(cj);
  }
  return j;
}

struct McEstimate {
  double log_value = 0.0;
  double std_error = 0.0;  // on the log scale
  long draws = 0;
};

// Monte-Carlo estimate of the marginal likelihood the closed-form PPD
// integrates in one step: draw Sigma from its inverse-Wishart posterior and
// the class mean from its conditional Gaussian, then average N(x|mu, Sigma)
// in log-sum-exp form. Restricted to D <= 2 where sampling is cheap enough
// to act as an oracle.
inline McEstimate mc_ppd_oracle(const Eigen::Ref<const Vector>& x,
                                const std::vector<const ClassStats*>& support,
                                const ClassStats* current, const GlobalPrior& prior,
                                const Hyperparams& hp, long n_draws, std::uint64_t seed) {
  const Eigen::Index dim = x.size();
  if (dim > 2) throw ValidationError("mc_ppd_oracle: restricted to D <= 2");
  if (n_draws < 100000) throw ValidationError("mc_ppd_oracle: needs at least 1e5 draws");
  if (!(hp.m > 0.0)) throw ValidationError("mc_ppd_oracle: hp.m must be resolved");

  const MetaPosterior mp = meta_posterior(support, prior, hp, current);
  const double n_c = current ? static_cast<double>(current->count) : 0.0;
  const double nu = hp.m + static_cast<double>(mp.count_sum - mp.support_count) + n_c;
  Matrix s_bar = prior.sigma0 + mp.scatter_sum;
  if (current) s_bar += current->scatter + mp.s_mu;
  const double kappa_n = n_c + mp.kappa_tilde;
  const Vector mu_n =
      current ? detail::ppd_location(n_c, current->mean, mp.kappa_tilde, mp.mu_bar).eval()
              : mp.mu_bar;

  Eigen::LLT<Matrix> llt(s_bar);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("mc_ppd_oracle: degenerate posterior scatter");
  }
  const Matrix chol_s_bar = llt.matrixL();

  Rng rng(stream_key(seed, 0x0DAC1EULL, 17));
  std::vector<double> logp(static_cast<std::size_t>(n_draws));
  const double inv_sqrt_kappa = 1.0 / std::sqrt(kappa_n);
  for (long s = 0; s < n_draws; ++s) {
    const Matrix g = detail::sample_inverse_wishart_factor(rng, chol_s_bar, nu);
    const Vector mu = mu_n + inv_sqrt_kappa * (g * detail::sample_normal_vec(rng, dim));
    Matrix sigma = g * g.transpose();
    Eigen::LLT<Matrix> sig_llt(sigma);
    if (sig_llt.info() != Eigen::Success) {
      throw NumericalError("mc_ppd_oracle: drew a degenerate covariance");
    }
    const Matrix chol = sig_llt.matrixL();
    const double log_det = 2.0 * chol.diagonal().array().log().sum();
    logp[static_cast<std::size_t>(s)] = mvn_logpdf(x, mu, chol, log_det);
  }

  const double top = *std::max_element(logp.begin(), logp.end());
  double sum = 0.0;
  for (double lp : logp) sum += std::exp(lp - top);
  const double mean = sum / static_cast<double>(n_draws);
  double var = 0.0;
  for (double lp : logp) {
    const double d = std::exp(lp - top) - mean;
    var += d * d;
  }
  var /= static_cast<double>(n_draws - 1);
  McEstimate est;
  est.log_value = top + std::log(mean);
  est.std_error = std::sqrt(var / static_cast<double>(n_draws)) / mean;
  est.draws = n_draws;
  return est;
}

// Classifies test rows with the true class-conditional Gaussians; the
// macro-averaged top-1 accuracy is the ceiling BZSL recovery is judged
// against.
inline double bayes_oracle_accuracy(const SynthData& data) {
  struct TrueClass {
    Matrix chol;
    double log_det = 0.0;
  };
  std::vector<TrueClass> kernels(data.classes.size());
  for (std::size_t c = 0; c < data.classes.size(); ++c) {
    const Matrix& sigma = data.metas[static_cast<std::size_t>(data.classes[c].meta_id)].sigma;
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("bayes_oracle_accuracy: degenerate true covariance");
    }
    kernels[c].chol = llt.matrixL();
    kernels[c].log_det = 2.0 * kernels[c].chol.diagonal().array().log().sum();
  }
  const std::vector<bool> is_test = test_mask(data.dataset, data.splits);
  std::map<int, long> total, correct;
  for (long r = 0; r < data.dataset.num_rows(); ++r) {
    if (!is_test[static_cast<std::size_t>(r)]) continue;
    const Vector x = data.dataset.features.row(r).transpose();
    int best = -1;
    double best_score = 0.0;
    for (std::size_t c = 0; c < data.classes.size(); ++c) {
      const double score =
          mvn_logpdf(x, data.classes[c].mu, kernels[c].chol, kernels[c].log_det);
      if (best < 0 || score > best_score) {
        best = data.classes[c].class_id;
        best_score = score;
      }
    }
    const int truth = data.dataset.labels[static_cast<std::size_t>(r)];
    total[truth]++;
    if (best == truth) correct[truth]++;
  }
  if (total.empty()) throw ValidationError("bayes_oracle_accuracy: no test rows");
  double acc = 0.0;
  for (const auto& [cls, n] : total) {
    acc += static_cast<double>(correct[cls]) / static_cast<double>(n);
  }
  return acc / static_cast<double>(total.size());
}

}  // namespace bzsl
