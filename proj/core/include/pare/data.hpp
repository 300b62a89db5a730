#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pare/tensor.hpp"

namespace pare {

// Dataset and file I/O failures (corrupt headers, truncated payloads).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct VolumeSample {
  std::string id;
  std::array<int, 3> grid{0, 0, 0};  // z, y, x
  double voxel_mm = 1.0;
  Tensor image;                // [Dz, Dy, Dx], intensities in [0, 1]
  std::vector<uint8_t> mask;   // voxel labels 0..4; empty when unavailable
  int label = 0;               // 0 benign, 1 malignant
  double diameter_mm = 0.0;    // equivalent-sphere diameter of the nodule

  bool has_mask() const { return !mask.empty(); }
  int64_t voxels() const { return int64_t(grid[0]) * grid[1] * grid[2]; }
};

// Class-conditional effect sizes. Chosen so the classes overlap but stay
// statistically separable; the oracle-feature baseline certifies the task.
struct PhantomEffects {
  double diam_mean_benign = 4.8;
  double diam_mean_malignant = 6.0;
  double diam_sd_benign = 0.7;
  double diam_sd_malignant = 0.9;
  double contact_prob_benign = 0.25;
  double contact_prob_malignant = 0.65;
  double spic_max_benign = 0.15;   // amplitude drawn uniform in [0, max]
  double spic_min_malignant = 0.10;
  double spic_max_malignant = 0.45;
};

struct PhantomSpec {
  std::array<int, 3> grid{16, 24, 24};
  double voxel_mm = 1.0;
  double malignant_fraction = 0.35;
  double mask_availability = 0.7;
  PhantomEffects effects;
  uint64_t seed = 0;

  void validate() const;
};

// Generator-internal ground truth, the oracle features for baseline models.
struct PhantomTruth {
  double diameter_mm = 0;
  bool vessel_contact = false;
  double spiculation = 0;
};

// Deterministic in (spec.seed, index); each sample has its own stream.
VolumeSample generate_phantom(const PhantomSpec& spec, int64_t index,
                              PhantomTruth* truth = nullptr);

// ---- dataset directory I/O ---------------------------------------------------
struct ManifestEntry {
  std::string id;
  std::string split;  // train / val / test
  int label = 0;
  double diameter_mm = 0;
  bool has_mask = false;
};

// Exact split counts (fractions rounded to +/-1), shuffled deterministically.
std::vector<std::string> assign_splits(int64_t n, double train_frac, double val_frac,
                                       double test_frac, uint64_t seed);

void write_volume(const VolumeSample& s, const std::string& path);
VolumeSample read_volume(const std::string& path, const std::string& id);

// One file per sample plus manifest.tsv. read(write(x)) == x exactly.
void write_dataset(const std::vector<VolumeSample>& samples,
                   const std::vector<std::string>& splits, const std::string& dir);
std::vector<ManifestEntry> read_manifest(const std::string& dir);
// split_filter empty loads everything.
std::vector<VolumeSample> read_dataset(const std::string& dir,
                                       const std::string& split_filter = "");

}  // namespace pare
