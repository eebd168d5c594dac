#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include "bzsl/common.hpp"
#include "bzsl/stats.hpp"

namespace bzsl {

// kappa0: dispersion of meta-class means around mu0.
// kappa1: dispersion of class means around their meta-class mean.
// m:      inverse-Wishart degrees of freedom; 0 means "resolve to D + 2 at fit".
// s:      scale applied to the averaged class covariance to form sigma0.
// K:      support size for meta-class formation.
// a0/b0:  inverse-Gamma shape/scale for the constrained (diagonal) model;
//         0 means "derive from m and s".
struct Hyperparams {
  double kappa0 = 0.1;
  double kappa1 = 10.0;
  double m = 0.0;
  double s = 1.0;
  int K = 2;
  double a0 = 0.0;
  double b0 = 0.0;
};

enum class Sigma0Mode {
  kCovariance,  // sigma0 = s * mean of S/(n-1) over classes with n >= 2
  kScatter      // sigma0 = s * mean of raw scatter matrices
};

struct GlobalPrior {
  Vector mu0;
  Matrix sigma0;
};

struct DiagGlobalPrior {
  Vector mu0;
  Vector sigma0;
};

// Posterior quantities of one meta-class: the posterior meta mean and its
// concentration, the harmonic-mean concentration of the induced class-mean
// prior, pooled support scatter, and the rank-one cross term.
struct MetaPosterior {
  Vector mu_bar;
  double kappa_bar = 0.0;
  double kappa_tilde = 0.0;
  Matrix scatter_sum;
  long count_sum = 0;
  int support_count = 0;
  Matrix s_mu;
};

struct DiagMetaPosterior {
  Vector mu_bar;
  double kappa_bar = 0.0;
  double kappa_tilde = 0.0;
  Vector scatter_sum;
  long count_sum = 0;
  int support_count = 0;
  Vector s_mu;
};

struct ClassPpd {
  int class_id = -1;
  bool seen = false;
  StudentT t;
};

inline GlobalPrior global_prior(const std::map<int, ClassStats>& seen_stats, double s,
                                Sigma0Mode mode = Sigma0Mode::kCovariance) {
  if (seen_stats.empty()) throw ValidationError("global_prior: no seen classes");
  const Eigen::Index dim = seen_stats.begin()->second.mean.size();
  GlobalPrior prior;
  prior.mu0 = Vector::Zero(dim);
  prior.sigma0 = Matrix::Zero(dim, dim);
  long contributing = 0;
  for (const auto& [id, st] : seen_stats) {
    prior.mu0 += st.mean;
    if (mode == Sigma0Mode::kCovariance) {
      if (st.count >= 2) {
        prior.sigma0 += st.scatter / static_cast<double>(st.count - 1);
        ++contributing;
      }
    } else {
      prior.sigma0 += st.scatter;
      ++contributing;
    }
  }
  prior.mu0 /= static_cast<double>(seen_stats.size());
  if (contributing == 0) {
    throw ValidationError("global_prior: every class is a singleton, no covariance information");
  }
  prior.sigma0 *= s / static_cast<double>(contributing);
  return prior;
}

inline DiagGlobalPrior global_prior_diag(const std::map<int, DiagStats>& seen_stats, double s,
                                         Sigma0Mode mode = Sigma0Mode::kCovariance) {
  if (seen_stats.empty()) throw ValidationError("global_prior: no seen classes");
  const Eigen::Index dim = seen_stats.begin()->second.mean.size();
  DiagGlobalPrior prior;
  prior.mu0 = Vector::Zero(dim);
  prior.sigma0 = Vector::Zero(dim);
  long contributing = 0;
  for (const auto& [id, st] : seen_stats) {
    prior.mu0 += st.mean;
    if (mode == Sigma0Mode::kCovariance) {
      if (st.count >= 2) {
        prior.sigma0 += st.scatter_diag / static_cast<double>(st.count - 1);
        ++contributing;
      }
    } else {
      prior.sigma0 += st.scatter_diag;
      ++contributing;
    }
  }
  prior.mu0 /= static_cast<double>(seen_stats.size());
  if (contributing == 0) {
    throw ValidationError("global_prior: every class is a singleton, no covariance information");
  }
  prior.sigma0 *= s / static_cast<double>(contributing);
  return prior;
}

namespace detail {

// Order-independent pieces of a support set, shareable across classes whose
// supports coincide.
struct SupportSums {
  double weight_sum = 0.0;   // sum of n*k1/(n+k1)
  Vector weighted_mean_sum;  // sum of the same weights times class means
  long count_sum = 0;
  double nm1_sum = 0.0;      // sum of (n - 1)
  int support_count = 0;
};

template <typename Stats>
SupportSums support_sums_head(const std::vector<const Stats*>& support, double kappa1) {
  if (support.empty()) throw ValidationError("meta_posterior: empty support");
  SupportSums sums;
  const Eigen::Index dim = support.front()->mean.size();
  sums.weighted_mean_sum = Vector::Zero(dim);
  for (const Stats* st : support) {
    const double n = static_cast<double>(st->count);
    const double w = n * kappa1 / (n + kappa1);
    sums.weight_sum += w;
    sums.weighted_mean_sum += w * st->mean;
    sums.count_sum += st->count;
    sums.nm1_sum += n - 1.0;
    ++sums.support_count;
  }
  return sums;
}

// Shapes below are mirrored between the seen and unseen constructions so the
// unseen formulas coincide bit-for-bit with the seen ones at n = 0.
inline double ppd_dof(double n_current, double nm1_sum, double m, double dim) {
  return n_current + nm1_sum + m - dim + 1.0;
}

inline double ppd_scale_factor(double n_current, double kappa_tilde, double dof) {
  return (n_current + kappa_tilde + 1.0) / ((n_current + kappa_tilde) * dof);
}

inline Vector ppd_location(double n_current, const Vector& sample_mean, double kappa_tilde,
                           const Vector& mu_bar) {
  const double w = n_current / (n_current + kappa_tilde);
  return sample_mean * w + mu_bar * (1.0 - w);
}

inline void check_dof(double dof, const char* who) {
  if (!(dof > 0.0)) {
    std::ostringstream msg;
    msg << who << ": degrees of freedom " << dof
        << " not positive (hyperparameter misconfiguration)";
    throw NumericalError(msg.str());
  }
}

}  // namespace detail

// Posterior of the meta-class mean plus derived concentrations. `current`
// contributes only the rank-one cross term; it is not part of the support sum.
inline MetaPosterior meta_posterior(const std::vector<const ClassStats*>& support,
                                    const GlobalPrior& prior, const Hyperparams& hp,
                                    const ClassStats* current = nullptr) {
  const auto sums = detail::support_sums_head(support, hp.kappa1);
  MetaPosterior mp;
  mp.kappa_bar = sums.weight_sum + hp.kappa0;
  mp.mu_bar = (sums.weighted_mean_sum + hp.kappa0 * prior.mu0) / mp.kappa_bar;
  mp.kappa_tilde = mp.kappa_bar * hp.kappa1 / (mp.kappa_bar + hp.kappa1);
  mp.count_sum = sums.count_sum;
  mp.support_count = sums.support_count;
  const Eigen::Index dim = mp.mu_bar.size();
  mp.scatter_sum = Matrix::Zero(dim, dim);
  for (const ClassStats* st : support) mp.scatter_sum += st->scatter;
  if (current != nullptr) {
    const double n = static_cast<double>(current->count);
    const Vector diff = current->mean - mp.mu_bar;
    mp.s_mu = (n * mp.kappa_tilde / (mp.kappa_tilde + n)) * (diff * diff.transpose());
  } else {
    mp.s_mu = Matrix::Zero(dim, dim);
  }
  return mp;
}

inline DiagMetaPosterior meta_posterior_diag(const std::vector<const DiagStats*>& support,
                                             const DiagGlobalPrior& prior, const Hyperparams& hp,
                                             const DiagStats* current = nullptr) {
  const auto sums = detail::support_sums_head(support, hp.kappa1);
  DiagMetaPosterior mp;
  mp.kappa_bar = sums.weight_sum + hp.kappa0;
  mp.mu_bar = (sums.weighted_mean_sum + hp.kappa0 * prior.mu0) / mp.kappa_bar;
  mp.kappa_tilde = mp.kappa_bar * hp.kappa1 / (mp.kappa_bar + hp.kappa1);
  mp.count_sum = sums.count_sum;
  mp.support_count = sums.support_count;
  const Eigen::Index dim = mp.mu_bar.size();
  mp.scatter_sum = Vector::Zero(dim);
  for (const DiagStats* st : support) mp.scatter_sum += st->scatter_diag;
  if (current != nullptr) {
    const double n = static_cast<double>(current->count);
    const Vector diff = current->mean - mp.mu_bar;
    mp.s_mu = (n * mp.kappa_tilde / (mp.kappa_tilde + n)) * diff.array().square().matrix();
  } else {
    mp.s_mu = Vector::Zero(dim);
  }
  return mp;
}

// Attaches the rank-one cross term of a specific current class to a meta
// posterior computed without one. Lets fitted classes share the rest of the
// meta posterior when their support sets coincide.
inline MetaPosterior with_current(MetaPosterior mp, const ClassStats& current) {
  const double n = static_cast<double>(current.count);
  const Vector diff = current.mean - mp.mu_bar;
  mp.s_mu = (n * mp.kappa_tilde / (mp.kappa_tilde + n)) * (diff * diff.transpose());
  return mp;
}

inline DiagMetaPosterior with_current(DiagMetaPosterior mp, const DiagStats& current) {
  const double n = static_cast<double>(current.count);
  const Vector diff = current.mean - mp.mu_bar;
  mp.s_mu = (n * mp.kappa_tilde / (mp.kappa_tilde + n)) * diff.array().square().matrix();
  return mp;
}

// Seen-class PPD: Student-t blending the class likelihood with the local and
// global priors. hp.m must already be resolved (> 0). A zero-count current
// class (zero scatter) reduces to the unseen construction exactly.
inline ClassPpd seen_ppd(const ClassStats& current, const MetaPosterior& mp,
                         const GlobalPrior& prior, const Hyperparams& hp, int class_id) {
  if (current.count < 0) throw ValidationError("seen_ppd: negative sample count");
  const double dim = static_cast<double>(current.mean.size());
  const double n = static_cast<double>(current.count);
  const double dof = detail::ppd_dof(n, static_cast<double>(mp.count_sum - mp.support_count),
                                     hp.m, dim);
  detail::check_dof(dof, "seen_ppd");
  const Vector location = detail::ppd_location(n, current.mean, mp.kappa_tilde, mp.mu_bar);
  const Matrix numerator = ((prior.sigma0 + mp.scatter_sum) + current.scatter) + mp.s_mu;
  const double factor = detail::ppd_scale_factor(n, mp.kappa_tilde, dof);
  return ClassPpd{class_id, true, StudentT::full(location, numerator * factor, dof)};
}

// Unseen-class PPD: the sample statistics of the current class drop out, so
// only the local prior remains.
inline ClassPpd unseen_ppd(const MetaPosterior& mp, const GlobalPrior& prior,
                           const Hyperparams& hp, int class_id) {
  if (mp.support_count < 1) throw ValidationError("unseen_ppd: empty support");
  const double dim = static_cast<double>(mp.mu_bar.size());
  const double dof = detail::ppd_dof(0.0, static_cast<double>(mp.count_sum - mp.support_count),
                                     hp.m, dim);
  detail::check_dof(dof, "unseen_ppd");
  const Matrix numerator = prior.sigma0 + mp.scatter_sum;
  const double factor = detail::ppd_scale_factor(0.0, mp.kappa_tilde, dof);
  return ClassPpd{class_id, false, StudentT::full(mp.mu_bar, numerator * factor, dof)};
}

// Diagonal (constrained) analogues: each axis is the univariate model with
// inverse-Gamma(a0, b0) on the axis variance, i.e. m_d = 2*a0, sigma0_d = 2*b0.
// The joint log-density is the sum over axes, so the per-axis dof uses D = 1.
inline ClassPpd seen_ppd_diag(const DiagStats& current, const DiagMetaPosterior& mp,
                              const DiagGlobalPrior& prior, const Hyperparams& hp,
                              int class_id) {
  if (current.count < 0) throw ValidationError("seen_ppd_diag: negative sample count");
  const double n = static_cast<double>(current.count);
  const double m_axis = hp.a0 != 0.0 ? 2.0 * hp.a0 : hp.m;
  const double dof = detail::ppd_dof(n, static_cast<double>(mp.count_sum - mp.support_count),
                                     m_axis, 1.0);
  detail::check_dof(dof, "seen_ppd_diag");
  const Vector location = detail::ppd_location(n, current.mean, mp.kappa_tilde, mp.mu_bar);
  const Vector numerator = ((prior.sigma0 + mp.scatter_sum) + current.scatter_diag) + mp.s_mu;
  const double factor = detail::ppd_scale_factor(n, mp.kappa_tilde, dof);
  return ClassPpd{class_id, true, StudentT::diagonal(location, numerator * factor, dof)};
}

inline ClassPpd unseen_ppd_diag(const DiagMetaPosterior& mp, const DiagGlobalPrior& prior,
                                const Hyperparams& hp, int class_id) {
  if (mp.support_count < 1) throw ValidationError("unseen_ppd_diag: empty support");
  const double m_axis = hp.a0 != 0.0 ? 2.0 * hp.a0 : hp.m;
  const double dof = detail::ppd_dof(0.0, static_cast<double>(mp.count_sum - mp.support_count),
                                     m_axis, 1.0);
  detail::check_dof(dof, "unseen_ppd_diag");
  const Vector numerator = prior.sigma0 + mp.scatter_sum;
  const double factor = detail::ppd_scale_factor(0.0, mp.kappa_tilde, dof);
  return ClassPpd{class_id, false, StudentT::diagonal(mp.mu_bar, numerator * factor, dof)};
}

}  // namespace bzsl
