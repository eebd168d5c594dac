#pragma once

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bzsl/classifier.hpp"
#include "bzsl/common.hpp"

namespace bzsl {

// Per-class averaged metrics: ts (unseen mean accuracy), tr (seen mean
// accuracy), their harmonic mean, and top-K rates over the unseen pool.
struct EvalReport {
  std::map<int, double> per_class_acc;
  double ts = 0.0;
  double tr = 0.0;
  double H = 0.0;
  std::map<int, double> topk;        // macro-averaged (headline)
  std::map<int, double> topk_micro;  // per-image average, for reference
  std::vector<int> excluded_seen;    // pool classes with zero test rows
  std::vector<int> excluded_unseen;
};

inline double harmonic_mean(double tr, double ts) {
  if (tr + ts <= 0.0) return 0.0;
  return 2.0 * tr * ts / (tr + ts);
}

struct PerClassAccuracy {
  std::map<int, double> acc;
  std::vector<int> excluded;  // pool classes with zero test rows
  double macro = 0.0;
};

inline PerClassAccuracy per_class_top1(const std::vector<Prediction>& preds,
                                       const std::vector<int>& truths,
                                       const std::set<int>& pool) {
  if (pool.empty()) throw ValidationError("per_class_top1: empty pool");
  if (preds.size() != truths.size()) {
    throw ValidationError("per_class_top1: predictions and truths differ in length");
  }
  std::map<int, long> total, correct;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int truth = truths[i];
    if (!pool.count(truth)) continue;
    total[truth]++;
    if (preds[i].class_id == truth) correct[truth]++;
  }
  PerClassAccuracy out;
  for (int cls : pool) {
    auto it = total.find(cls);
    if (it == total.end()) {
      out.excluded.push_back(cls);
      continue;
    }
    out.acc[cls] = static_cast<double>(correct[cls]) / static_cast<double>(it->second);
  }
  if (!out.acc.empty()) {
    double sum = 0.0;
    for (const auto& [cls, a] : out.acc) sum += a;
    out.macro = sum / static_cast<double>(out.acc.size());
  }
  return out;
}

struct TopkResult {
  std::map<int, double> macro;
  std::map<int, double> micro;
};

// Rankings use the full score vector each prediction carries (the GZSL
// space); hits are counted for rows whose truth lies in `pool`.
inline TopkResult topk_accuracy(const std::vector<Prediction>& preds,
                                const std::vector<int>& truths,
                                const std::vector<int>& k_list, const std::set<int>& pool) {
  if (preds.size() != truths.size()) {
    throw ValidationError("topk_accuracy: predictions and truths differ in length");
  }
  TopkResult out;
  if (preds.empty()) return out;
  const std::size_t n_candidates = preds.front().log_scores.size();
  for (int k : k_list) {
    if (k < 1 || static_cast<std::size_t>(k) > n_candidates) {
      std::ostringstream msg;
      msg << "topk_accuracy: k=" << k << " exceeds candidate count " << n_candidates;
      throw ValidationError(msg.str());
    }
  }
  std::map<int, std::map<int, long>> hits;  // k -> class -> hits
  std::map<int, long> total;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int truth = truths[i];
    if (!pool.count(truth)) continue;
    total[truth]++;
    std::vector<std::pair<int, double>> ranked(preds[i].log_scores.begin(),
                                               preds[i].log_scores.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    int rank = -1;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (ranked[r].first == truth) {
        rank = static_cast<int>(r);
        break;
      }
    }
    for (int k : k_list) {
      if (rank >= 0 && rank < k) hits[k][truth]++;
    }
  }
  for (int k : k_list) {
    double macro_sum = 0.0;
    long n_classes = 0;
    long hit_total = 0, row_total = 0;
    for (const auto& [cls, n] : total) {
      const long h = hits[k].count(cls) ? hits[k][cls] : 0;
      macro_sum += static_cast<double>(h) / static_cast<double>(n);
      ++n_classes;
      hit_total += h;
      row_total += n;
    }
    out.macro[k] = n_classes ? macro_sum / static_cast<double>(n_classes) : 0.0;
    out.micro[k] = row_total ? static_cast<double>(hit_total) / static_cast<double>(row_total) : 0.0;
  }
  return out;
}

inline EvalReport evaluate(const std::vector<Prediction>& preds, const std::vector<int>& truths,
                           const std::set<int>& seen_pool, const std::set<int>& unseen_pool,
                           const std::vector<int>& k_list = {}) {
  EvalReport report;
  if (!unseen_pool.empty()) {
    const PerClassAccuracy ts = per_class_top1(preds, truths, unseen_pool);
    report.ts = ts.macro;
    report.excluded_unseen = ts.excluded;
    report.per_class_acc.insert(ts.acc.begin(), ts.acc.end());
    if (!k_list.empty()) {
      const TopkResult topk = topk_accuracy(preds, truths, k_list, unseen_pool);
      report.topk = topk.macro;
      report.topk_micro = topk.micro;
    }
  }
  if (!seen_pool.empty()) {
    bool any_seen_row = false;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      if (seen_pool.count(truths[i])) {
        any_seen_row = true;
        break;
      }
    }
    if (any_seen_row) {
      const PerClassAccuracy tr = per_class_top1(preds, truths, seen_pool);
      report.tr = tr.macro;
      report.excluded_seen = tr.excluded;
      report.per_class_acc.insert(tr.acc.begin(), tr.acc.end());
    } else {
      report.excluded_seen.assign(seen_pool.begin(), seen_pool.end());
    }
  }
  report.H = harmonic_mean(report.tr, report.ts);
  return report;
}

inline nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json j;
  j["ts"] = report.ts;
  j["tr"] = report.tr;
  j["H"] = report.H;
  nlohmann::json acc = nlohmann::json::object();
  for (const auto& [cls, a] : report.per_class_acc) acc[std::to_string(cls)] = a;
  j["per_class_acc"] = acc;
  nlohmann::json topk = nlohmann::json::object();
  for (const auto& [k, a] : report.topk) topk[std::to_string(k)] = a;
  j["topk"] = topk;
  nlohmann::json topk_micro = nlohmann::json::object();
  for (const auto& [k, a] : report.topk_micro) topk_micro[std::to_string(k)] = a;
  j["topk_micro"] = topk_micro;
  j["excluded_seen"] = report.excluded_seen;
  j["excluded_unseen"] = report.excluded_unseen;
  return j;
}

// Aligned text table in the ts/tr/H column convention, percentages with one
// decimal.
inline std::string report_table(const EvalReport& report, const std::string& label = "BZSL") {
  std::ostringstream out;
  out << std::left << std::setw(16) << "method" << std::right << std::setw(8) << "ts"
      << std::setw(8) << "tr" << std::setw(8) << "H" << "\n";
  out << std::left << std::setw(16) << label << std::right << std::fixed
      << std::setprecision(1) << std::setw(8) << 100.0 * report.ts << std::setw(8)
      << 100.0 * report.tr << std::setw(8) << 100.0 * report.H << "\n";
  if (!report.topk.empty()) {
    out << "top-K (unseen pool, macro | micro):\n";
    for (const auto& [k, a] : report.topk) {
      out << "  K=" << std::setw(4) << k << std::setw(8) << 100.0 * a << " |" << std::setw(8)
          << 100.0 * report.topk_micro.at(k) << "\n";
    }
  }
  return out.str();
}

}  // namespace bzsl
