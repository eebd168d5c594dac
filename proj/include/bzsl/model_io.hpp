#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bzsl/classifier.hpp"
#include "bzsl/common.hpp"

namespace bzsl {

// Versioned binary model file: magic "BZSLM1\0\0", hyperparameter block,
// optional PCA block, then per-class Student-t records (location, dof, and
// the scale as a lower Cholesky factor or diagonal). Little-endian, f64.
namespace detail {

inline constexpr char kModelMagic[8] = {'B', 'Z', 'S', 'L', 'M', '1', '\0', '\0'};

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

inline double read_f64(std::istream& in, const std::string& file) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw ValidationError(file + ": truncated model file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void write_u64m(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64m(std::istream& in, const std::string& file) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw ValidationError(file + ": truncated model file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void write_vec(std::ostream& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(out, v(i));
}

inline Vector read_vec(std::istream& in, Eigen::Index n, const std::string& file) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = read_f64(in, file);
  return v;
}

}  // namespace detail

inline void save_model(const Model& model, const std::filesystem::path& path) {
  if (model.variant == Variant::kAblationV1) {
    throw ValidationError("save_model: the V1 ablation model is not serializable");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  out.write(detail::kModelMagic, 8);
  detail::write_u64m(out, model.variant == Variant::kUnconstrained ? 0 : 1);
  detail::write_u64m(out, static_cast<std::uint64_t>(model.dim_raw));
  detail::write_u64m(out, static_cast<std::uint64_t>(model.dim_model));
  detail::write_f64(out, model.hp.kappa0);
  detail::write_f64(out, model.hp.kappa1);
  detail::write_f64(out, model.hp.m);
  detail::write_f64(out, model.hp.s);
  detail::write_f64(out, model.hp.a0);
  detail::write_f64(out, model.hp.b0);
  detail::write_u64m(out, static_cast<std::uint64_t>(model.hp.K));
  detail::write_u64m(out, model.pca ? 1 : 0);
  if (model.pca) {
    detail::write_vec(out, model.pca->mean);
    for (Eigen::Index c = 0; c < model.pca->projection.cols(); ++c) {
      detail::write_vec(out, model.pca->projection.col(c));
    }
    detail::write_vec(out, model.pca->explained_variance);
  }
  detail::write_u64m(out, model.ppds.size());
  for (const ClassPpd& ppd : model.ppds) {
    detail::write_u64m(out, static_cast<std::uint64_t>(ppd.class_id));
    detail::write_u64m(out, ppd.seen ? 1 : 0);
    detail::write_f64(out, ppd.t.dof());
    detail::write_vec(out, ppd.t.location());
    if (ppd.t.form() == ScaleForm::kFull) {
      const Matrix& chol = ppd.t.scale_cholesky();
      for (Eigen::Index r = 0; r < chol.rows(); ++r) {
        for (Eigen::Index c = 0; c <= r; ++c) detail::write_f64(out, chol(r, c));
      }
    } else {
      detail::write_vec(out, ppd.t.scale_diag());
    }
  }
  if (!out) throw ValidationError("write failed: " + path.string());
}

inline Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing file: " + path.string());
  const std::string file = path.string();
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kModelMagic, 8) != 0) {
    throw ValidationError(file + ": bad model magic");
  }
  Model model;
  const std::uint64_t variant = detail::read_u64m(in, file);
  if (variant > 1) throw ValidationError(file + ": unknown variant tag");
  model.variant = variant == 0 ? Variant::kUnconstrained : Variant::kConstrained;
  model.dim_raw = static_cast<int>(detail::read_u64m(in, file));
  model.dim_model = static_cast<int>(detail::read_u64m(in, file));
  model.hp.kappa0 = detail::read_f64(in, file);
  model.hp.kappa1 = detail::read_f64(in, file);
  model.hp.m = detail::read_f64(in, file);
  model.hp.s = detail::read_f64(in, file);
  model.hp.a0 = detail::read_f64(in, file);
  model.hp.b0 = detail::read_f64(in, file);
  model.hp.K = static_cast<int>(detail::read_u64m(in, file));
  if (detail::read_u64m(in, file)) {
    PcaModel pca;
    pca.mean = detail::read_vec(in, model.dim_raw, file);
    pca.projection.resize(model.dim_raw, model.dim_model);
    for (Eigen::Index c = 0; c < model.dim_model; ++c) {
      pca.projection.col(c) = detail::read_vec(in, model.dim_raw, file);
    }
    pca.explained_variance = detail::read_vec(in, model.dim_model, file);
    model.pca = std::move(pca);
  }
  const std::uint64_t n_classes = detail::read_u64m(in, file);
  model.ppds.reserve(n_classes);
  for (std::uint64_t i = 0; i < n_classes; ++i) {
    const int class_id = static_cast<int>(detail::read_u64m(in, file));
    const bool seen = detail::read_u64m(in, file) != 0;
    const double dof = detail::read_f64(in, file);
    Vector location = detail::read_vec(in, model.dim_model, file);
    if (model.variant == Variant::kUnconstrained) {
      Matrix chol = Matrix::Zero(model.dim_model, model.dim_model);
      for (Eigen::Index r = 0; r < model.dim_model; ++r) {
        for (Eigen::Index c = 0; c <= r; ++c) chol(r, c) = detail::read_f64(in, file);
      }
      model.ppds.push_back(
          ClassPpd{class_id, seen, StudentT::from_cholesky(std::move(location), std::move(chol), dof)});
    } else {
      Vector diag = detail::read_vec(in, model.dim_model, file);
      model.ppds.push_back(
          ClassPpd{class_id, seen, StudentT::diagonal(std::move(location), std::move(diag), dof)});
    }
    if (seen) {
      model.seen_pool.push_back(class_id);
    } else {
      model.unseen_pool.push_back(class_id);
    }
  }
  char extra;
  if (in.read(&extra, 1)) throw ValidationError(file + ": trailing bytes after payload");
  return model;
}

}  // namespace bzsl
