#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pare/tensor.hpp"

namespace pare {

class MetricError : public std::runtime_error {
 public:
  explicit MetricError(const std::string& msg) : std::runtime_error(msg) {}
};

// Rank-statistic AUC with midrank tie handling: the probability that a random
// positive outranks a random negative, ties counted 0.5. Requires both classes.
double auc(std::span<const double> scores, std::span<const int> labels);

// 2|A n B| / (|A| + |B|) for one class id; 1.0 when both sets are empty.
double dice_score(std::span<const uint8_t> predicted, std::span<const uint8_t> truth,
                  int class_id);

// Diameter bins: [.., 10) -> 0, [10, 20] -> 1, (20, ..) -> 2.
int diameter_bin(double mm);
extern const std::array<const char*, 3> kBinNames;

struct SampleInfo {
  std::string id;
  int label = 0;
  double diameter_mm = 0;
};

// Per-head score columns aligned with `ids`; empty columns are heads the
// evaluated arm does not have.
struct Predictions {
  std::vector<std::string> ids;
  std::vector<double> primary;  // score used for binning and auc_all
  std::vector<double> p1, p2, p3, ensemble;
};

struct EvalReport {
  int64_t n_total = 0;
  double auc_all = 0;
  std::array<int64_t, 3> n_by_bin{0, 0, 0};
  std::array<std::optional<double>, 3> auc_by_bin;
  std::map<std::string, double> head_auc;  // p1/p2/p3/ensemble where present
  std::optional<std::array<double, 5>> mean_dice_by_class;
  int64_t n_with_mask = 0;

  std::string to_table() const;       // human-readable, diameter-stratified
  std::string to_keyvalues() const;   // machine-readable key=value lines
};

// Bins by diameter, computes per-bin and overall AUC for the primary score
// plus per-head overall AUCs. Duplicate or unmatched ids are errors.
EvalReport stratified_report(const Predictions& preds, const std::vector<SampleInfo>& samples);

}  // namespace pare
