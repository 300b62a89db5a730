#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pare/attention.hpp"
#include "pare/ops.hpp"

namespace pare {

struct KmeansResult {
  Tensor centers;               // [k, D]
  std::vector<int> assignment;  // per point, ties to the lowest center index
  std::vector<double> objective_trace;  // within-cluster sum of squared distances per iteration
  int iterations = 0;
};

// Lloyd iterations with k-means++ seeding. Empty clusters are re-seeded from
// the point farthest from its assigned center. The recorded objective is the
// within-cluster sum of squared Euclidean distances, which mean-updates
// provably never increase.
KmeansResult kmeans(const Tensor& points, int k, int max_iter, uint64_t seed);

double kmeans_objective(const Tensor& points, const Tensor& centers,
                        const std::vector<int>& assignment);

// Class-split prototype memory. Rows evolve only through momentum_update
// (and the one-time warm-up re-initialization); no gradients ever reach them.
struct PrototypeBank {
  Tensor benign;     // [N/2, D]
  Tensor malignant;  // [N/2, D]
  real lambda = real(0.95);
  std::vector<int64_t> last_update_benign;
  std::vector<int64_t> last_update_malignant;

  int rows_per_class() const { return static_cast<int>(benign.dim(0)); }
  int total_rows() const { return 2 * rows_per_class(); }
  int dim() const { return static_cast<int>(benign.dim(1)); }
  void validate() const;

  static PrototypeBank random_init(int n_prototypes, int dim, real lambda, uint64_t seed);
};

// Condenses per-class embeddings into N/2 prototypes each via k-means.
// A class with fewer than N/2 embeddings is padded by resampling with
// Gaussian jitter (sigma 0.01); an empty class is an error.
PrototypeBank init_bank(const std::vector<std::vector<real>>& benign_embeds,
                        const std::vector<std::vector<real>>& malignant_embeds, int n_prototypes,
                        real lambda, uint64_t seed);

// Nearest-prototype EMA: row <- lambda*row + (1-lambda)*q on the class-y bank.
// Euclidean distance, ties to the lowest row index. Returns the updated row.
int momentum_update(PrototypeBank& bank, std::span<const real> nodule_embed, int label,
                    int64_t iteration);

void build_cpa_params(ParamStore& params, int layers, int dim, Rng& rng);

// L pre-norm cross-attention blocks: queries are the sequence tokens,
// keys/values the N concatenated prototype rows (no gradient into the bank).
Tensor cpa_forward(const Tensor& tokens, const PrototypeBank& bank, int layers, int heads,
                   ParamStore& params, std::vector<Tensor>* probs_out = nullptr);

}  // namespace pare
