#include "pare/prototype.hpp"

#include <algorithm>
#include <cmath>

#include "pare/rng.hpp"

namespace pare {
namespace {

double sq_dist(const real* a, const real* b, int64_t d) {
  double acc = 0;
  for (int64_t j = 0; j < d; ++j) {
    const double c = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    acc += c * c;
  }
  return acc;
}

// k-means++: first center uniform, then D^2-weighted. Degenerates gracefully
// when fewer than k distinct points exist (duplicates get zero weight).
Tensor kmeanspp_seed(const Tensor& points, int k, Rng& rng) {
  const int64_t n = points.dim(0), d = points.dim(1);
  const real* pd = points.data().data();
  std::vector<int64_t> chosen;
  chosen.push_back(rng.uniform_int(0, n));
  std::vector<double> dist2(static_cast<std::size_t>(n));
  while (static_cast<int>(chosen.size()) < k) {
    double total = 0;
    for (int64_t i = 0; i < n; ++i) {
      double best = sq_dist(pd + i * d, pd + chosen[0] * d, d);
      for (std::size_t c = 1; c < chosen.size(); ++c) {
        best = std::min(best, sq_dist(pd + i * d, pd + chosen[c] * d, d));
      }
      dist2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    int64_t pick = -1;
    if (total > 0) {
      double r = rng.uniform01() * total;
      for (int64_t i = 0; i < n; ++i) {
        r -= dist2[static_cast<std::size_t>(i)];
        if (r <= 0) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = n - 1;
    }
    if (pick < 0 || dist2[static_cast<std::size_t>(pick)] == 0) {
      // all remaining mass on duplicates; take the first unchosen index
      for (int64_t i = 0; i < n; ++i) {
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
  }
  Tensor centers(Shape{k, d});
  real* cd = centers.data().data();
  for (int c = 0; c < k; ++c) {
    for (int64_t j = 0; j < d; ++j) cd[c * d + j] = pd[chosen[static_cast<std::size_t>(c)] * d + j];
  }
  return centers;
}

}  // namespace

double kmeans_objective(const Tensor& points, const Tensor& centers,
                        const std::vector<int>& assignment) {
  const int64_t n = points.dim(0), d = points.dim(1);
  const real* pd = points.data().data();
  const real* cd = centers.data().data();
  double obj = 0;
  for (int64_t i = 0; i < n; ++i) {
    obj += sq_dist(pd + i * d, cd + int64_t(assignment[static_cast<std::size_t>(i)]) * d, d);
  }
  return obj;
}

KmeansResult kmeans(const Tensor& points, int k, int max_iter, uint64_t seed) {
  if (points.rank() != 2) {
    throw TensorError("kmeans: points must be [n, D], got " + shape_str(points.shape()));
  }
  const int64_t n = points.dim(0), d = points.dim(1);
  if (k < 1 || n < k) {
    throw TensorError("kmeans: need n >= k >= 1, got n=" + std::to_string(n) +
                      " k=" + std::to_string(k));
  }
  Rng rng(Rng::mix(seed, rng_tag::kKmeans));
  KmeansResult res;
  res.centers = kmeanspp_seed(points, k, rng);
  res.assignment.assign(static_cast<std::size_t>(n), 0);

  const real* pd = points.data().data();
  std::vector<int> prev(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < std::max(1, max_iter); ++it) {
    real* cd = res.centers.data().data();
    // assignment (ties to lowest index)
    for (int64_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(pd + i * d, cd, d);
      for (int c = 1; c < k; ++c) {
        const double dist = sq_dist(pd + i * d, cd + int64_t(c) * d, d);
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      res.assignment[static_cast<std::size_t>(i)] = best;
    }
    res.objective_trace.push_back(kmeans_objective(points, res.centers, res.assignment));
    res.iterations = it + 1;
    if (res.assignment == prev) break;
    prev = res.assignment;

    // center update: cluster means; empty clusters re-seed from the farthest point
    std::vector<double> acc(static_cast<std::size_t>(k * d), 0.0);
    std::vector<int64_t> count(static_cast<std::size_t>(k), 0);
    for (int64_t i = 0; i < n; ++i) {
      const int c = res.assignment[static_cast<std::size_t>(i)];
      count[static_cast<std::size_t>(c)]++;
      for (int64_t j = 0; j < d; ++j)
        acc[static_cast<std::size_t>(c * d + j)] += static_cast<double>(pd[i * d + j]);
    }
    std::vector<int> empties;
    for (int c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] == 0) {
        empties.push_back(c);
        continue;
      }
      for (int64_t j = 0; j < d; ++j) {
        cd[int64_t(c) * d + j] = static_cast<real>(acc[static_cast<std::size_t>(c * d + j)] /
                                                   static_cast<double>(count[static_cast<std::size_t>(c)]));
      }
    }
    if (!empties.empty()) {
      // farthest points w.r.t. the updated non-empty centers
      std::vector<std::pair<double, int64_t>> far;
      for (int64_t i = 0; i < n; ++i) {
        const int c = res.assignment[static_cast<std::size_t>(i)];
        if (count[static_cast<std::size_t>(c)] == 0) continue;
        far.push_back({sq_dist(pd + i * d, cd + int64_t(c) * d, d), i});
      }
      std::sort(far.begin(), far.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      std::size_t next = 0;
      for (int c : empties) {
        const int64_t i = far[std::min(next++, far.size() - 1)].second;
        for (int64_t j = 0; j < d; ++j) cd[int64_t(c) * d + j] = pd[i * d + j];
      }
    }
  }
  return res;
}

void PrototypeBank::validate() const {
  if (!benign.defined() || !malignant.defined() || benign.shape() != malignant.shape() ||
      benign.rank() != 2) {
    throw TensorError("prototype bank: class banks must share shape [N/2, D]");
  }
  if (lambda <= real(0) || lambda >= real(1)) {
    throw TensorError("prototype bank: lambda must lie in (0, 1)");
  }
  if (!benign.all_finite() || !malignant.all_finite()) {
    throw NumericError("prototype bank: non-finite entries");
  }
}

PrototypeBank PrototypeBank::random_init(int n_prototypes, int dim, real lambda, uint64_t seed) {
  if (n_prototypes < 2 || n_prototypes % 2 != 0) {
    throw TensorError("prototype bank: N must be even and >= 2, got " +
                      std::to_string(n_prototypes));
  }
  Rng rng(Rng::mix(seed, rng_tag::kBank));
  PrototypeBank bank;
  bank.lambda = lambda;
  const int rows = n_prototypes / 2;
  for (Tensor* t : {&bank.benign, &bank.malignant}) {
    *t = Tensor(Shape{rows, dim});
    fill_normal(*t, rng, 1.0);
    real* td = t->data().data();
    for (int r = 0; r < rows; ++r) {  // unit-norm rows
      double norm = 0;
      for (int j = 0; j < dim; ++j) norm += double(td[r * dim + j]) * td[r * dim + j];
      const real inv = static_cast<real>(1.0 / std::sqrt(std::max(norm, 1e-30)));
      for (int j = 0; j < dim; ++j) td[r * dim + j] *= inv;
    }
  }
  bank.last_update_benign.assign(static_cast<std::size_t>(rows), 0);
  bank.last_update_malignant.assign(static_cast<std::size_t>(rows), 0);
  bank.validate();
  return bank;
}

namespace {
Tensor condense_class(const std::vector<std::vector<real>>& embeds, int rows, uint64_t seed) {
  const int64_t d = static_cast<int64_t>(embeds[0].size());
  std::vector<real> buf;
  buf.reserve(embeds.size() * static_cast<std::size_t>(d));
  for (const auto& e : embeds) {
    if (static_cast<int64_t>(e.size()) != d) {
      throw TensorError("init_bank: inconsistent embedding dims");
    }
    buf.insert(buf.end(), e.begin(), e.end());
  }
  int64_t n = static_cast<int64_t>(embeds.size());
  if (n < rows) {
    // pad by resampling with jitter so k-means still has k points
    Rng rng(Rng::mix(seed, 0x7061646aull));
    while (n < rows) {
      const int64_t src = rng.uniform_int(0, static_cast<int64_t>(embeds.size()));
      for (int64_t j = 0; j < d; ++j) {
        buf.push_back(embeds[static_cast<std::size_t>(src)][static_cast<std::size_t>(j)] +
                      static_cast<real>(rng.normal(0.0, 0.01)));
      }
      ++n;
    }
  }
  Tensor pts(Shape{n, d}, std::move(buf));
  return kmeans(pts, rows, 100, seed).centers;
}
}  // namespace

PrototypeBank init_bank(const std::vector<std::vector<real>>& benign_embeds,
                        const std::vector<std::vector<real>>& malignant_embeds, int n_prototypes,
                        real lambda, uint64_t seed) {
  if (n_prototypes < 2 || n_prototypes % 2 != 0) {
    throw TensorError("init_bank: N must be even and >= 2, got " + std::to_string(n_prototypes));
  }
  if (benign_embeds.empty() || malignant_embeds.empty()) {
    throw TensorError("init_bank: both classes need at least one embedding");
  }
  const int rows = n_prototypes / 2;
  PrototypeBank bank;
  bank.lambda = lambda;
  bank.benign = condense_class(benign_embeds, rows, Rng::mix(seed, 0));
  bank.malignant = condense_class(malignant_embeds, rows, Rng::mix(seed, 1));
  bank.last_update_benign.assign(static_cast<std::size_t>(rows), 0);
  bank.last_update_malignant.assign(static_cast<std::size_t>(rows), 0);
  bank.validate();
  return bank;
}

int momentum_update(PrototypeBank& bank, std::span<const real> nodule_embed, int label,
                    int64_t iteration) {
  Tensor& target = (label == 0) ? bank.benign : bank.malignant;
  auto& stamps = (label == 0) ? bank.last_update_benign : bank.last_update_malignant;
  const int64_t rows = target.dim(0), d = target.dim(1);
  if (static_cast<int64_t>(nodule_embed.size()) != d) {
    throw TensorError("momentum_update: embedding dim " + std::to_string(nodule_embed.size()) +
                      " vs bank dim " + std::to_string(d));
  }
  for (real v : nodule_embed) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError("momentum_update: non-finite embedding");
    }
  }
  real* td = target.data().data();
  int best = 0;
  double best_d = sq_dist(td, nodule_embed.data(), d);
  for (int64_t r = 1; r < rows; ++r) {
    const double dist = sq_dist(td + r * d, nodule_embed.data(), d);
    if (dist < best_d) {  // strict: ties keep the lowest index
      best_d = dist;
      best = static_cast<int>(r);
    }
  }
  const real lam = bank.lambda;
  real* row = td + int64_t(best) * d;
  for (int64_t j = 0; j < d; ++j) {
    row[j] = lam * row[j] + (real(1) - lam) * nodule_embed[static_cast<std::size_t>(j)];
  }
  stamps[static_cast<std::size_t>(best)] = iteration;
  return best;
}

void build_cpa_params(ParamStore& params, int layers, int dim, Rng& rng) {
  for (int l = 0; l < layers; ++l) {
    build_transformer_block(params, "cpa.l" + std::to_string(l), dim, rng);
  }
}

Tensor cpa_forward(const Tensor& tokens, const PrototypeBank& bank, int layers, int heads,
                   ParamStore& params, std::vector<Tensor>* probs_out) {
  if (layers < 1) throw TensorError("cpa: layer count must be >= 1");
  bank.validate();
  if (bank.dim() != tokens.dim(1)) {
    throw TensorError("cpa: token dim " + std::to_string(tokens.dim(1)) + " vs bank dim " +
                      std::to_string(bank.dim()));
  }
  // detached concat [N, D]: prototypes feed attention as constants
  Tensor kv = concat({bank.benign.detach(), bank.malignant.detach()}, 0);
  Tensor z = tokens;
  for (int l = 0; l < layers; ++l) {
    z = transformer_block(z, &kv, heads, params, "cpa.l" + std::to_string(l), probs_out);
  }
  return z;
}

}  // namespace pare
