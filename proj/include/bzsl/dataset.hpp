#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bzsl/common.hpp"
#include "bzsl/stats.hpp"

namespace bzsl {

// Feature/attribute/label bundle. Class ids are dense integers [0, C);
// names are metadata only. Immutable once loaded; safe to share across
// concurrent readers.
struct Dataset {
  Matrix features;    // N x D
  std::vector<int> labels;
  Matrix attributes;  // C x A, row c = semantic vector of class c
  std::vector<std::string> class_names;  // empty when absent

  long num_rows() const { return features.rows(); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
  int num_classes() const { return static_cast<int>(attributes.rows()); }
  int attribute_dim() const { return static_cast<int>(attributes.cols()); }
};

struct SplitSpec {
  std::vector<int> seen_train;  // classes with training images
  std::vector<int> unseen;      // classes with no training images
  std::vector<int> val_unseen;  // seen-pool classes held out as unseen for tuning
  std::optional<std::vector<long>> test_index;  // explicit test rows; absent
                                                // means "rows of unseen classes"

  // Classes that carry training images: seen_train plus the validation pool.
  std::vector<int> seen_pool() const {
    std::vector<int> pool = seen_train;
    pool.insert(pool.end(), val_unseen.begin(), val_unseen.end());
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    return pool;
  }
};

struct Bundle {
  Dataset dataset;
  SplitSpec splits;
};

struct SplitReport {
  std::map<int, long> train_counts;  // per-class training row counts
  std::vector<int> violations;       // unseen classes with >= 1 training row
  long n_seen_train = 0;
  long n_val_unseen = 0;
  long n_unseen = 0;
};

namespace detail {

inline constexpr char kFeatureMagic[8] = {'B', 'Z', 'S', 'L', 'F', '1', '\0', '\0'};
inline constexpr char kAttributeMagic[8] = {'B', 'Z', 'S', 'L', 'A', '1', '\0', '\0'};

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64(std::istream& in, const std::string& file) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw ValidationError(file + ": truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

// Payloads are float32 little-endian row-major.
inline void write_f32_matrix(std::ostream& out, const Matrix& m) {
  std::vector<float> row(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = static_cast<float>(m(r, c));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

inline Matrix read_f32_matrix(std::istream& in, std::uint64_t rows, std::uint64_t cols,
                              const std::string& file) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::vector<float> row(static_cast<std::size_t>(cols));
  for (std::uint64_t r = 0; r < rows; ++r) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) {
      std::ostringstream msg;
      msg << file << ": truncated payload at row " << r;
      throw ValidationError(msg.str());
    }
    for (std::uint64_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[static_cast<std::size_t>(c)];
    }
  }
  return m;
}

inline Matrix read_payload_file(const std::filesystem::path& path, const char magic[8],
                                std::uint64_t* rows_out, std::uint64_t* cols_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing file: " + path.string());
  char got[8];
  in.read(got, 8);
  if (!in || std::memcmp(got, magic, 8) != 0) {
    throw ValidationError(path.string() + ": bad magic");
  }
  const std::uint64_t rows = read_u64(in, path.string());
  const std::uint64_t cols = read_u64(in, path.string());
  if (rows < 1 || cols < 1) throw ValidationError(path.string() + ": empty shape in header");
  Matrix m = read_f32_matrix(in, rows, cols, path.string());
  char extra;
  if (in.read(&extra, 1)) throw ValidationError(path.string() + ": trailing bytes after payload");
  *rows_out = rows;
  *cols_out = cols;
  return m;
}

inline void check_ids(const std::vector<int>& ids, int num_classes, const std::string& key,
                      const std::string& file) {
  for (int id : ids) {
    if (id < 0 || id >= num_classes) {
      std::ostringstream msg;
      msg << file << ": " << key << " contains class id " << id << " outside [0, "
          << num_classes << ")";
      throw ValidationError(msg.str());
    }
  }
}

inline std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace detail

// Quantizes to the float32 grid used by the bundle payload, so an in-memory
// dataset survives save/load without drift.
inline void quantize_to_storage(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = static_cast<double>(static_cast<float>(m(r, c)));
    }
  }
}

inline void validate_dataset(const Dataset& ds) {
  if (ds.num_rows() < 1 || ds.feature_dim() < 1) {
    throw ValidationError("dataset: features must be non-empty");
  }
  if (ds.num_classes() < 1 || ds.attribute_dim() < 1) {
    throw ValidationError("dataset: attributes must be non-empty");
  }
  if (static_cast<long>(ds.labels.size()) != ds.num_rows()) {
    throw ValidationError("dataset: labels length does not match feature rows");
  }
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] < 0 || ds.labels[i] >= ds.num_classes()) {
      std::ostringstream msg;
      msg << "labels.txt line " << (i + 1) << ": label " << ds.labels[i]
          << " out of range [0, " << ds.num_classes() << ")";
      throw ValidationError(msg.str());
    }
  }
  for (Eigen::Index r = 0; r < ds.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c) {
      if (!std::isfinite(ds.features(r, c))) {
        std::ostringstream msg;
        msg << "features.bin row " << r << " col " << c << ": non-finite value";
        throw ValidationError(msg.str());
      }
    }
  }
  for (Eigen::Index r = 0; r < ds.attributes.rows(); ++r) {
    bool all_zero = true;
    for (Eigen::Index c = 0; c < ds.attributes.cols(); ++c) {
      if (!std::isfinite(ds.attributes(r, c))) {
        std::ostringstream msg;
        msg << "attributes.bin row " << r << " col " << c << ": non-finite value";
        throw ValidationError(msg.str());
      }
      if (ds.attributes(r, c) != 0.0) all_zero = false;
    }
    if (all_zero) {
      std::ostringstream msg;
      msg << "attributes.bin row " << r << ": all-zero attribute vector";
      throw ValidationError(msg.str());
    }
  }
  if (!ds.class_names.empty() &&
      static_cast<int>(ds.class_names.size()) != ds.num_classes()) {
    throw ValidationError("classes.txt: name count does not match attribute rows");
  }
}

inline void validate_splits(const Dataset& ds, const SplitSpec& splits) {
  detail::check_ids(splits.seen_train, ds.num_classes(), "seen_train", "splits.json");
  detail::check_ids(splits.unseen, ds.num_classes(), "unseen", "splits.json");
  detail::check_ids(splits.val_unseen, ds.num_classes(), "val_unseen", "splits.json");
  if (splits.seen_train.empty()) throw ValidationError("splits.json: seen_train is empty");
  std::set<int> seen(splits.seen_train.begin(), splits.seen_train.end());
  for (int id : splits.unseen) {
    if (seen.count(id)) {
      std::ostringstream msg;
      msg << "splits.json: class " << id << " appears in both seen_train and unseen";
      throw ValidationError(msg.str());
    }
  }
  std::set<int> unseen(splits.unseen.begin(), splits.unseen.end());
  for (int id : splits.val_unseen) {
    if (unseen.count(id)) {
      std::ostringstream msg;
      msg << "splits.json: val_unseen class " << id << " overlaps the unseen set";
      throw ValidationError(msg.str());
    }
    if (seen.count(id)) {
      std::ostringstream msg;
      msg << "splits.json: val_unseen class " << id << " overlaps seen_train";
      throw ValidationError(msg.str());
    }
  }
  if (splits.test_index) {
    for (long idx : *splits.test_index) {
      if (idx < 0 || idx >= ds.num_rows()) {
        std::ostringstream msg;
        msg << "splits.json: test_index row " << idx << " outside [0, " << ds.num_rows() << ")";
        throw ValidationError(msg.str());
      }
    }
  }
}

// A row is a test row when listed in test_index; without an explicit list,
// rows of unseen classes are the test rows.
inline std::vector<bool> test_mask(const Dataset& ds, const SplitSpec& splits) {
  std::vector<bool> mask(static_cast<std::size_t>(ds.num_rows()), false);
  if (splits.test_index) {
    for (long idx : *splits.test_index) mask[static_cast<std::size_t>(idx)] = true;
  } else {
    std::set<int> unseen(splits.unseen.begin(), splits.unseen.end());
    for (long r = 0; r < ds.num_rows(); ++r) {
      if (unseen.count(ds.labels[static_cast<std::size_t>(r)])) mask[static_cast<std::size_t>(r)] = true;
    }
  }
  return mask;
}

inline SplitReport validate_split(const Dataset& ds, const SplitSpec& splits) {
  SplitReport report;
  report.n_seen_train = static_cast<long>(splits.seen_train.size());
  report.n_val_unseen = static_cast<long>(splits.val_unseen.size());
  report.n_unseen = static_cast<long>(splits.unseen.size());
  const std::vector<bool> is_test = test_mask(ds, splits);
  for (long r = 0; r < ds.num_rows(); ++r) {
    if (!is_test[static_cast<std::size_t>(r)]) report.train_counts[ds.labels[static_cast<std::size_t>(r)]]++;
  }
  for (int id : splits.unseen) {
    auto it = report.train_counts.find(id);
    if (it != report.train_counts.end() && it->second > 0) report.violations.push_back(id);
  }
  std::sort(report.violations.begin(), report.violations.end());
  return report;
}

inline Bundle load_bundle(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  Bundle bundle;
  std::uint64_t n = 0, d = 0, c = 0, a = 0;
  bundle.dataset.features =
      detail::read_payload_file(dir / "features.bin", detail::kFeatureMagic, &n, &d);
  bundle.dataset.attributes =
      detail::read_payload_file(dir / "attributes.bin", detail::kAttributeMagic, &c, &a);

  {
    std::ifstream in(dir / "labels.txt");
    if (!in) throw ValidationError("missing file: " + (dir / "labels.txt").string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        std::size_t pos = 0;
        const int v = std::stoi(line, &pos);
        if (pos != line.size()) throw std::invalid_argument("trailing");
        bundle.dataset.labels.push_back(v);
      } catch (const std::exception&) {
        std::ostringstream msg;
        msg << "labels.txt line " << line_no << ": not an integer: '" << line << "'";
        throw ValidationError(msg.str());
      }
    }
    if (bundle.dataset.labels.size() != n) {
      std::ostringstream msg;
      msg << "labels.txt: " << bundle.dataset.labels.size() << " labels for " << n << " rows";
      throw ValidationError(msg.str());
    }
  }

  {
    const fs::path path = dir / "splits.json";
    std::ifstream in(path);
    if (!in) throw ValidationError("missing file: " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
    if (!j.contains("seen_train") || !j.contains("unseen")) {
      throw ValidationError(path.string() + ": requires keys seen_train and unseen");
    }
    bundle.splits.seen_train = detail::sorted_unique(j["seen_train"].get<std::vector<int>>());
    bundle.splits.unseen = detail::sorted_unique(j["unseen"].get<std::vector<int>>());
    if (j.contains("val_unseen")) {
      bundle.splits.val_unseen = detail::sorted_unique(j["val_unseen"].get<std::vector<int>>());
    }
    if (j.contains("test_index")) {
      auto idx = j["test_index"].get<std::vector<long>>();
      std::sort(idx.begin(), idx.end());
      idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
      bundle.splits.test_index = std::move(idx);
    }
  }

  {
    std::ifstream in(dir / "classes.txt");
    if (in) {
      std::string line;
      while (std::getline(in, line)) bundle.dataset.class_names.push_back(line);
    }
  }

  validate_dataset(bundle.dataset);
  validate_splits(bundle.dataset, bundle.splits);
  return bundle;
}

inline void save_bundle(const Dataset& ds, const SplitSpec& splits,
                        const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  validate_dataset(ds);
  std::error_code ec;
  fs::create_directories(dir, ec);
  auto open_out = [&](const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + p.string());
    return out;
  };

  {
    auto out = open_out(dir / "features.bin");
    out.write(detail::kFeatureMagic, 8);
    detail::write_u64(out, static_cast<std::uint64_t>(ds.features.rows()));
    detail::write_u64(out, static_cast<std::uint64_t>(ds.features.cols()));
    detail::write_f32_matrix(out, ds.features);
    if (!out) throw ValidationError("write failed: " + (dir / "features.bin").string());
  }
  {
    auto out = open_out(dir / "attributes.bin");
    out.write(detail::kAttributeMagic, 8);
    detail::write_u64(out, static_cast<std::uint64_t>(ds.attributes.rows()));
    detail::write_u64(out, static_cast<std::uint64_t>(ds.attributes.cols()));
    detail::write_f32_matrix(out, ds.attributes);
    if (!out) throw ValidationError("write failed: " + (dir / "attributes.bin").string());
  }
  {
    auto out = open_out(dir / "labels.txt");
    for (int v : ds.labels) out << v << "\n";
    if (!out) throw ValidationError("write failed: " + (dir / "labels.txt").string());
  }
  {
    nlohmann::json j;
    j["seen_train"] = splits.seen_train;
    j["unseen"] = splits.unseen;
    if (!splits.val_unseen.empty()) j["val_unseen"] = splits.val_unseen;
    if (splits.test_index) j["test_index"] = *splits.test_index;
    auto out = open_out(dir / "splits.json");
    out << j.dump(2) << "\n";
    if (!out) throw ValidationError("write failed: " + (dir / "splits.json").string());
  }
  if (!ds.class_names.empty()) {
    auto out = open_out(dir / "classes.txt");
    for (const auto& name : ds.class_names) out << name << "\n";
    if (!out) throw ValidationError("write failed: " + (dir / "classes.txt").string());
  }
}

// CSV with a header row; numeric cells, comma separated.
inline Matrix load_csv_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        std::ostringstream msg;
        msg << path.string() << " line " << line_no << ": not a number: '" << cell << "'";
        throw ValidationError(msg.str());
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      std::ostringstream msg;
      msg << path.string() << " line " << line_no << ": ragged row";
      throw ValidationError(msg.str());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(path.string() + ": no data rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  quantize_to_storage(m);
  return m;
}

inline Bundle bundle_from_csv(const std::filesystem::path& features_csv,
                              const std::filesystem::path& attributes_csv,
                              const std::filesystem::path& labels_txt,
                              const std::filesystem::path& splits_json) {
  Bundle bundle;
  bundle.dataset.features = load_csv_matrix(features_csv);
  bundle.dataset.attributes = load_csv_matrix(attributes_csv);
  {
    std::ifstream in(labels_txt);
    if (!in) throw ValidationError("missing file: " + labels_txt.string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) bundle.dataset.labels.push_back(std::stoi(line));
    }
  }
  {
    std::ifstream in(splits_json);
    if (!in) throw ValidationError("missing file: " + splits_json.string());
    nlohmann::json j;
    in >> j;
    bundle.splits.seen_train = detail::sorted_unique(j.at("seen_train").get<std::vector<int>>());
    bundle.splits.unseen = detail::sorted_unique(j.at("unseen").get<std::vector<int>>());
    if (j.contains("val_unseen")) {
      bundle.splits.val_unseen = detail::sorted_unique(j["val_unseen"].get<std::vector<int>>());
    }
    if (j.contains("test_index")) {
      bundle.splits.test_index = j["test_index"].get<std::vector<long>>();
    }
  }
  validate_dataset(bundle.dataset);
  validate_splits(bundle.dataset, bundle.splits);
  return bundle;
}

}  // namespace bzsl
