#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <utility>

#include "bzsl/common.hpp"

namespace bzsl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Per-class sufficient statistics: sample mean, scatter matrix (sum of
// centered outer products, unnormalized), sample count.
struct ClassStats {
  Vector mean;
  Matrix scatter;
  long count = 0;
};

// Diagonal counterpart used by the constrained model: scatter reduces to
// per-axis squared-deviation sums, so memory stays O(D) per class.
struct DiagStats {
  Vector mean;
  Vector scatter_diag;
  long count = 0;
};

inline ClassStats class_stats(const Eigen::Ref<const Matrix>& rows) {
  if (rows.rows() < 1) throw ValidationError("class_stats: empty input");
  ClassStats st;
  st.count = rows.rows();
  st.mean = rows.colwise().mean().transpose();
  const Matrix centered = rows.rowwise() - st.mean.transpose();
  st.scatter = centered.transpose() * centered;
  st.scatter = ((st.scatter + st.scatter.transpose()) * 0.5).eval();
  return st;
}

inline DiagStats class_stats_diag(const Eigen::Ref<const Matrix>& rows) {
  if (rows.rows() < 1) throw ValidationError("class_stats_diag: empty input");
  DiagStats st;
  st.count = rows.rows();
  st.mean = rows.colwise().mean().transpose();
  const Matrix centered = rows.rowwise() - st.mean.transpose();
  st.scatter_diag = centered.array().square().colwise().sum().transpose();
  return st;
}

inline DiagStats to_diag(const ClassStats& st) {
  return DiagStats{st.mean, st.scatter.diagonal(), st.count};
}

// Orthonormal projection onto the top-d principal directions of the rows it
// was fitted on. Fitting population is the caller's responsibility (training
// rows only in the classifier pipeline).
struct PcaModel {
  Vector mean;
  Matrix projection;          // D x d, orthonormal columns
  Vector explained_variance;  // descending, one per retained component
  int input_dim() const { return static_cast<int>(projection.rows()); }
  int output_dim() const { return static_cast<int>(projection.cols()); }
};

inline PcaModel pca_fit(const Eigen::Ref<const Matrix>& train_rows, int d) {
  const Eigen::Index n = train_rows.rows();
  const Eigen::Index dim = train_rows.cols();
  if (d < 1 || d > std::min<Eigen::Index>(dim, n)) {
    std::ostringstream msg;
    msg << "pca_fit: d=" << d << " out of range [1, min(D=" << dim
        << ", n=" << n << ")]";
    throw ValidationError(msg.str());
  }
  PcaModel model;
  model.mean = train_rows.colwise().mean().transpose();
  const Matrix centered = train_rows.rowwise() - model.mean.transpose();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = sv.size() ? sv(0) * 1e-12 * static_cast<double>(std::max(n, dim)) : 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol) ++rank;
  }
  if (d > rank) {
    std::ostringstream msg;
    msg << "pca_fit: requested d=" << d << " exceeds data rank " << rank;
    throw NumericalError(msg.str());
  }
  model.projection = svd.matrixV().leftCols(d);
  model.explained_variance.resize(d);
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  for (int i = 0; i < d; ++i) {
    model.explained_variance(i) = sv(i) * sv(i) / denom;
    // Deterministic sign: largest-magnitude loading is positive.
    Eigen::Index arg = 0;
    model.projection.col(i).cwiseAbs().maxCoeff(&arg);
    if (model.projection(arg, i) < 0.0) model.projection.col(i) = -model.projection.col(i);
  }
  return model;
}

inline Matrix pca_apply(const PcaModel& model, const Eigen::Ref<const Matrix>& rows) {
  if (rows.cols() != model.projection.rows()) {
    throw ValidationError("pca_apply: dimension mismatch");
  }
  return (rows.rowwise() - model.mean.transpose()) * model.projection;
}

inline Vector pca_apply_vec(const PcaModel& model, const Eigen::Ref<const Vector>& x) {
  if (x.size() != model.projection.rows()) {
    throw ValidationError("pca_apply: dimension mismatch");
  }
  return model.projection.transpose() * (x - model.mean);
}

enum class ScaleForm { kFull, kDiagonal };

// Multivariate Student-t parameters. The full form caches the lower Cholesky
// factor and log-determinant of the scale at construction so scoring never
// refactorizes; construction is where PD violations surface.
class StudentT {
 public:
  static StudentT full(Vector location, const Matrix& scale, double dof) {
    check_dof(dof);
    if (scale.rows() != scale.cols() || scale.rows() != location.size()) {
      throw ValidationError("StudentT: scale/location dimension mismatch");
    }
    Eigen::LLT<Matrix> llt(scale);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("StudentT: scale matrix is not positive definite");
    }
    return from_cholesky(std::move(location), llt.matrixL(), dof);
  }

  static StudentT from_cholesky(Vector location, Matrix chol_lower, double dof) {
    check_dof(dof);
    StudentT t;
    t.form_ = ScaleForm::kFull;
    t.location_ = std::move(location);
    t.chol_lower_ = std::move(chol_lower);
    t.dof_ = dof;
    t.log_det_scale_ = 2.0 * t.chol_lower_.diagonal().array().log().sum();
    if (!std::isfinite(t.log_det_scale_)) {
      throw NumericalError("StudentT: non-finite log-determinant");
    }
    return t;
  }

  static StudentT diagonal(Vector location, Vector scale_diag, double dof) {
    check_dof(dof);
    if (scale_diag.size() != location.size()) {
      throw ValidationError("StudentT: scale/location dimension mismatch");
    }
    if (!(scale_diag.array() > 0.0).all()) {
      throw NumericalError("StudentT: diagonal scale has non-positive entries");
    }
    StudentT t;
    t.form_ = ScaleForm::kDiagonal;
    t.location_ = std::move(location);
    t.scale_diag_ = std::move(scale_diag);
    t.dof_ = dof;
    t.log_det_scale_ = t.scale_diag_.array().log().sum();
    return t;
  }

  ScaleForm form() const { return form_; }
  const Vector& location() const { return location_; }
  double dof() const { return dof_; }
  double log_det_scale() const { return log_det_scale_; }
  const Matrix& scale_cholesky() const { return chol_lower_; }
  const Vector& scale_diag() const { return scale_diag_; }
  Eigen::Index dim() const { return location_.size(); }

  Matrix scale() const {
    if (form_ == ScaleForm::kDiagonal) {
      return Vector(scale_diag_).asDiagonal();
    }
    return chol_lower_ * chol_lower_.transpose();
  }

 private:
  static void check_dof(double dof) {
    if (!(dof > 0.0)) {
      std::ostringstream msg;
      msg << "StudentT: degrees of freedom must be positive, got " << dof;
      throw NumericalError(msg.str());
    }
  }

  ScaleForm form_ = ScaleForm::kFull;
  Vector location_;
  Matrix chol_lower_;
  Vector scale_diag_;
  double dof_ = 1.0;
  double log_det_scale_ = 0.0;
};

inline double student_t_logpdf(const Eigen::Ref<const Vector>& x, const StudentT& t) {
  if (x.size() != t.dim()) throw ValidationError("student_t_logpdf: dimension mismatch");
  const double v = t.dof();
  double res;
  if (t.form() == ScaleForm::kFull) {
    const double d = static_cast<double>(t.dim());
    const Vector y = t.scale_cholesky().template triangularView<Eigen::Lower>().solve(
        (x - t.location()).eval());
    const double m2 = y.squaredNorm();
    res = std::lgamma(0.5 * (v + d)) - std::lgamma(0.5 * v) -
          0.5 * d * std::log(v * kPi) - 0.5 * t.log_det_scale() -
          0.5 * (v + d) * std::log1p(m2 / v);
  } else {
    // Product of univariate Student-t's, one per axis.
    const double head = std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v) -
                        0.5 * std::log(v * kPi);
    res = 0.0;
    for (Eigen::Index i = 0; i < t.dim(); ++i) {
      const double s2 = t.scale_diag()(i);
      const double delta = x(i) - t.location()(i);
      res += head - 0.5 * std::log(s2) -
             0.5 * (v + 1.0) * std::log1p(delta * delta / (s2 * v));
    }
  }
  if (!std::isfinite(res)) throw NumericalError("student_t_logpdf: non-finite result");
  return res;
}

// Gaussian log-density against a precomputed Cholesky factor; shared by the
// ablation classifier and the sampling oracles.
inline double mvn_logpdf(const Eigen::Ref<const Vector>& x,
                         const Eigen::Ref<const Vector>& mean,
                         const Matrix& chol_lower, double log_det) {
  const double d = static_cast<double>(x.size());
  const Vector y =
      chol_lower.template triangularView<Eigen::Lower>().solve((x - mean).eval());
  return -0.5 * (d * std::log(2.0 * kPi) + log_det + y.squaredNorm());
}

}  // namespace bzsl
