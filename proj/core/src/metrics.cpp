#include "pare/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

namespace pare {

const std::array<const char*, 3> kBinNames = {"<10mm", "10~20mm", ">20mm"};

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw MetricError("auc: " + std::to_string(scores.size()) + " scores vs " +
                      std::to_string(labels.size()) + " labels");
  }
  int64_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1) ++n_pos;
    else if (y == 0) ++n_neg;
    else throw MetricError("auc: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0) {
    throw MetricError("auc: needs both classes (" + std::to_string(n_pos) + " positive, " +
                      std::to_string(n_neg) + " negative)");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // midranks over tie groups
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * (double(i + 1) + double(j));  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum_pos += midrank;
    }
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * double(n_pos) * double(n_pos + 1);
  return u / (double(n_pos) * double(n_neg));
}

double dice_score(std::span<const uint8_t> predicted, std::span<const uint8_t> truth,
                  int class_id) {
  if (predicted.size() != truth.size()) {
    throw MetricError("dice_score: size mismatch " + std::to_string(predicted.size()) + " vs " +
                      std::to_string(truth.size()));
  }
  int64_t a = 0, b = 0, inter = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool pa = predicted[i] == class_id;
    const bool pb = truth[i] == class_id;
    a += pa;
    b += pb;
    inter += pa && pb;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * double(inter) / double(a + b);
}

int diameter_bin(double mm) {
  if (mm < 10.0) return 0;
  if (mm <= 20.0) return 1;
  return 2;
}

namespace {
std::optional<double> safe_auc(const std::vector<double>& s, const std::vector<int>& y) {
  try {
    return auc(s, y);
  } catch (const MetricError&) {
    return std::nullopt;  // single-class bin reports n/a
  }
}

std::string fmt_auc(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}
}  // namespace

EvalReport stratified_report(const Predictions& preds, const std::vector<SampleInfo>& samples) {
  if (preds.ids.size() != preds.primary.size()) {
    throw MetricError("stratified_report: ids and primary scores differ in length");
  }
  std::map<std::string, const SampleInfo*> by_id;
  for (const SampleInfo& s : samples) {
    if (!by_id.emplace(s.id, &s).second) {
      throw MetricError("stratified_report: duplicate sample id '" + s.id + "'");
    }
  }
  std::set<std::string> seen;
  EvalReport rep;
  rep.n_total = static_cast<int64_t>(preds.ids.size());

  std::vector<int> labels;
  std::array<std::vector<double>, 3> bin_scores;
  std::array<std::vector<int>, 3> bin_labels;
  for (std::size_t i = 0; i < preds.ids.size(); ++i) {
    if (!seen.insert(preds.ids[i]).second) {
      throw MetricError("stratified_report: duplicate prediction id '" + preds.ids[i] + "'");
    }
    auto it = by_id.find(preds.ids[i]);
    if (it == by_id.end()) {
      throw MetricError("stratified_report: prediction id '" + preds.ids[i] +
                        "' has no matching sample");
    }
    const SampleInfo& s = *it->second;
    labels.push_back(s.label);
    const int b = diameter_bin(s.diameter_mm);
    rep.n_by_bin[std::size_t(b)]++;
    bin_scores[std::size_t(b)].push_back(preds.primary[i]);
    bin_labels[std::size_t(b)].push_back(s.label);
  }
  rep.auc_all = auc(preds.primary, labels);
  for (int b = 0; b < 3; ++b) {
    if (rep.n_by_bin[std::size_t(b)] > 0) {
      rep.auc_by_bin[std::size_t(b)] = safe_auc(bin_scores[std::size_t(b)], bin_labels[std::size_t(b)]);
    }
  }
  auto head_col = [&](const char* name, const std::vector<double>& col) {
    if (col.empty()) return;
    if (col.size() != preds.ids.size()) {
      throw MetricError(std::string("stratified_report: head column ") + name +
                        " has wrong length");
    }
    if (auto v = safe_auc(col, labels)) rep.head_auc[name] = *v;
  };
  head_col("p1", preds.p1);
  head_col("p2", preds.p2);
  head_col("p3", preds.p3);
  head_col("ensemble", preds.ensemble);
  return rep;
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s %10s %10s %10s %10s\n", "", kBinNames[0], kBinNames[1],
                kBinNames[2], "All");
  os << buf;
  std::snprintf(buf, sizeof(buf), "%-12s %10lld %10lld %10lld %10lld\n", "n",
                (long long)n_by_bin[0], (long long)n_by_bin[1], (long long)n_by_bin[2],
                (long long)n_total);
  os << buf;
  std::snprintf(buf, sizeof(buf), "%-12s %10s %10s %10s %10.4f\n", "AUC",
                fmt_auc(auc_by_bin[0]).c_str(), fmt_auc(auc_by_bin[1]).c_str(),
                fmt_auc(auc_by_bin[2]).c_str(), auc_all);
  os << buf;
  for (const auto& [name, v] : head_auc) {
    std::snprintf(buf, sizeof(buf), "%-12s %10s %10s %10s %10.4f\n", name.c_str(), "", "", "", v);
    os << buf;
  }
  if (mean_dice_by_class) {
    os << "mean dice over " << n_with_mask << " masked samples:";
    for (int c = 0; c < 5; ++c) {
      std::snprintf(buf, sizeof(buf), " c%d=%.4f", c, (*mean_dice_by_class)[std::size_t(c)]);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::string EvalReport::to_keyvalues() const {
  std::ostringstream os;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "n_total=%lld\n", (long long)n_total);
  os << buf;
  std::snprintf(buf, sizeof(buf), "auc_all=%.6f\n", auc_all);
  os << buf;
  static const char* keys[3] = {"lt10", "10to20", "gt20"};
  for (int b = 0; b < 3; ++b) {
    std::snprintf(buf, sizeof(buf), "n_%s=%lld\n", keys[b], (long long)n_by_bin[std::size_t(b)]);
    os << buf;
    if (auc_by_bin[std::size_t(b)]) {
      std::snprintf(buf, sizeof(buf), "auc_%s=%.6f\n", keys[b], *auc_by_bin[std::size_t(b)]);
      os << buf;
    } else {
      std::snprintf(buf, sizeof(buf), "auc_%s=n/a\n", keys[b]);
      os << buf;
    }
  }
  for (const auto& [name, v] : head_auc) {
    std::snprintf(buf, sizeof(buf), "auc_%s=%.6f\n", name.c_str(), v);
    os << buf;
  }
  if (mean_dice_by_class) {
    for (int c = 0; c < 5; ++c) {
      std::snprintf(buf, sizeof(buf), "dice_class%d=%.6f\n", c,
                    (*mean_dice_by_class)[std::size_t(c)]);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), "n_with_mask=%lld\n", (long long)n_with_mask);
    os << buf;
  }
  return os.str();
}

}  // namespace pare
