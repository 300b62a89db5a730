#include "pare/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "pare/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "volume container writes native byte order and requires a little-endian host");

namespace pare {
namespace {

namespace fs = std::filesystem;

constexpr char kVolumeMagic[8] = {'P', 'A', 'R', 'E', 'V', 'O', 'L', 'S'};
constexpr uint32_t kVolumeVersion = 1;

// voxel classes
constexpr uint8_t kBackground = 0, kLung = 1, kNodule = 2, kVessel = 3, kTrachea = 4;

constexpr double kIntensity[5] = {0.05, 0.15, 0.65, 0.55, 0.05};
constexpr double kNoiseSigma = 0.03;

struct Vec3 {
  double z, y, x;
};

Vec3 operator-(Vec3 a, Vec3 b) { return {a.z - b.z, a.y - b.y, a.x - b.x}; }
Vec3 operator+(Vec3 a, Vec3 b) { return {a.z + b.z, a.y + b.y, a.x + b.x}; }
Vec3 operator*(Vec3 a, double s) { return {a.z * s, a.y * s, a.x * s}; }
double dot(Vec3 a, Vec3 b) { return a.z * b.z + a.y * b.y + a.x * b.x; }
double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

Vec3 random_unit(Rng& rng) {
  while (true) {
    Vec3 v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double n = norm(v);
    if (n > 1e-3 && n <= 1.0) return v * (1.0 / n);
  }
}

struct Ellipsoid {
  Vec3 center;
  Vec3 semi;
  bool contains(Vec3 p, double margin = 0) const {
    const Vec3 d = p - center;
    const double az = semi.z - margin, ay = semi.y - margin, ax = semi.x - margin;
    if (az <= 0.5 || ay <= 0.5 || ax <= 0.5) return false;
    const double r = (d.z / az) * (d.z / az) + (d.y / ay) * (d.y / ay) + (d.x / ax) * (d.x / ax);
    return r <= 1.0;
  }
};

double dist_to_line(Vec3 p, Vec3 origin, Vec3 dir) {
  const Vec3 d = p - origin;
  const double t = dot(d, dir);
  const Vec3 perp = d - dir * t;
  return norm(perp);
}

void paint_tube(std::vector<uint8_t>& mask, const std::array<int, 3>& g, const Ellipsoid& lung,
                Vec3 origin, Vec3 dir, double radius, uint8_t cls) {
  for (int z = 0; z < g[0]; ++z)
    for (int y = 0; y < g[1]; ++y)
      for (int x = 0; x < g[2]; ++x) {
        const Vec3 p{double(z), double(y), double(x)};
        if (!lung.contains(p)) continue;
        if (dist_to_line(p, origin, dir) > radius) continue;
        uint8_t& m = mask[std::size_t((z * g[1] + y) * g[2] + x)];
        if (m == kLung) m = cls;  // never overwrite an earlier structure
      }
}

// separable Gaussian blur, sigma 1 voxel, radius 2
void gaussian_blur(std::vector<double>& img, const std::array<int, 3>& g) {
  static const double w[5] = {0.054488685, 0.244201342, 0.402619947, 0.244201342, 0.054488685};
  const int dz = g[0], dy = g[1], dx = g[2];
  std::vector<double> tmp(img.size());
  auto idx = [&](int z, int y, int x) { return std::size_t((z * dy + y) * dx + x); };
  // z axis
  for (int z = 0; z < dz; ++z)
    for (int y = 0; y < dy; ++y)
      for (int x = 0; x < dx; ++x) {
        double acc = 0;
        for (int k = -2; k <= 2; ++k) {
          const int zz = std::clamp(z + k, 0, dz - 1);
          acc += w[k + 2] * img[idx(zz, y, x)];
        }
        tmp[idx(z, y, x)] = acc;
      }
  // y axis
  for (int z = 0; z < dz; ++z)
    for (int y = 0; y < dy; ++y)
      for (int x = 0; x < dx; ++x) {
        double acc = 0;
        for (int k = -2; k <= 2; ++k) {
          const int yy = std::clamp(y + k, 0, dy - 1);
          acc += w[k + 2] * tmp[idx(z, yy, x)];
        }
        img[idx(z, y, x)] = acc;
      }
  // x axis
  for (int z = 0; z < dz; ++z)
    for (int y = 0; y < dy; ++y)
      for (int x = 0; x < dx; ++x) {
        double acc = 0;
        for (int k = -2; k <= 2; ++k) {
          const int xx = std::clamp(x + k, 0, dx - 1);
          acc += w[k + 2] * tmp[idx(z, y, xx)];
        }
        img[idx(z, y, x)] = acc;
      }
}

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::ifstream& in, T& v, const std::string& path, const char* what) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) {
    throw IoError(path + ": truncated while reading " + what + " at offset " +
                  std::to_string(static_cast<long long>(in.tellg())));
  }
}

}  // namespace

void PhantomSpec::validate() const {
  for (int d : grid) {
    if (d < 8) throw TensorError("phantom: grid dims must be >= 8");
  }
  if (voxel_mm <= 0) throw TensorError("phantom: voxel size must be positive");
  if (malignant_fraction < 0 || malignant_fraction > 1) {
    throw TensorError("phantom: malignant_fraction must lie in [0, 1]");
  }
  if (mask_availability < 0 || mask_availability > 1) {
    throw TensorError("phantom: mask_availability must lie in [0, 1]");
  }
}

VolumeSample generate_phantom(const PhantomSpec& spec, int64_t index, PhantomTruth* truth) {
  spec.validate();
  Rng rng(Rng::mix(spec.seed, rng_tag::kData, static_cast<uint64_t>(index)));
  const auto& g = spec.grid;
  const auto& fx = spec.effects;
  const int64_t nvox = int64_t(g[0]) * g[1] * g[2];

  VolumeSample s;
  char idbuf[16];
  std::snprintf(idbuf, sizeof(idbuf), "s%06lld", static_cast<long long>(index));
  s.id = idbuf;
  s.grid = g;
  s.voxel_mm = spec.voxel_mm;
  s.label = rng.uniform01() < spec.malignant_fraction ? 1 : 0;

  // lung ellipsoid
  Ellipsoid lung;
  lung.center = {g[0] * (0.5 + rng.uniform(-0.03, 0.03)), g[1] * (0.5 + rng.uniform(-0.03, 0.03)),
                 g[2] * (0.5 + rng.uniform(-0.03, 0.03))};
  lung.semi = {g[0] * rng.uniform(0.42, 0.46), g[1] * rng.uniform(0.42, 0.46),
               g[2] * rng.uniform(0.42, 0.46)};

  std::vector<uint8_t> mask(static_cast<std::size_t>(nvox), kBackground);
  for (int z = 0; z < g[0]; ++z)
    for (int y = 0; y < g[1]; ++y)
      for (int x = 0; x < g[2]; ++x) {
        if (lung.contains({double(z), double(y), double(x)})) {
          mask[std::size_t((z * g[1] + y) * g[2] + x)] = kLung;
        }
      }

  // trachea: one axial tube off-center
  {
    const Vec3 origin{lung.center.z, lung.center.y + 0.45 * lung.semi.y, lung.center.x};
    paint_tube(mask, g, lung, origin, {1, 0, 0}, rng.uniform(1.1, 1.6), kTrachea);
  }

  // background vessels
  const int n_vessels = 2 + static_cast<int>(rng.uniform_int(0, 3));
  for (int i = 0; i < n_vessels; ++i) {
    Vec3 origin = lung.center + random_unit(rng) * rng.uniform(0, 0.5 * norm(lung.semi) / 1.7);
    paint_tube(mask, g, lung, origin, random_unit(rng), rng.uniform(0.7, 1.2), kVessel);
  }

  // nodule: label-dependent diameter and spiculation
  const double diam_mean = s.label ? fx.diam_mean_malignant : fx.diam_mean_benign;
  const double diam_sd = s.label ? fx.diam_sd_malignant : fx.diam_sd_benign;
  const double spic =
      s.label ? rng.uniform(fx.spic_min_malignant, fx.spic_max_malignant)
              : rng.uniform(0.0, fx.spic_max_benign);
  const double min_semi = std::min({lung.semi.z, lung.semi.y, lung.semi.x});

  Vec3 center;
  double radius = 0;
  bool placed = false;
  for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
    double d_target = std::max(4.0, rng.normal(diam_mean, diam_sd));
    d_target = std::min(d_target, 1.0 * min_semi);  // keep it inside the lung
    const double r = 0.5 * d_target / spec.voxel_mm;
    const double reach = r * (1.0 + spic) + 1.0;
    const Vec3 probe = lung.center + random_unit(rng) * rng.uniform(0, 0.45 * min_semi);
    if (lung.contains(probe, reach)) {
      center = probe;
      radius = r;
      placed = true;
    }
  }
  if (!placed) {
    throw TensorError("phantom: nodule does not fit in lung after 100 attempts (grid " +
                      std::to_string(g[0]) + "x" + std::to_string(g[1]) + "x" +
                      std::to_string(g[2]) + ")");
  }

  // spiculation lobes: radius(u) = r * (1 + A * max_k (u.dk)+^8)
  std::vector<Vec3> lobes;
  const int n_lobes = 5 + static_cast<int>(rng.uniform_int(0, 4));
  for (int i = 0; i < n_lobes; ++i) lobes.push_back(random_unit(rng));

  // vessel feeding: a tangent tube painted before the nodule so contact survives
  const double contact_prob = s.label ? fx.contact_prob_malignant : fx.contact_prob_benign;
  const bool contact = rng.uniform01() < contact_prob;
  if (contact) {
    const Vec3 u = random_unit(rng);
    const Vec3 touch = center + u * radius;
    Vec3 dir = random_unit(rng);
    dir = dir - u * dot(dir, u);  // tangent direction
    const double n = norm(dir);
    if (n > 1e-6) dir = dir * (1.0 / n);
    else dir = {1, 0, 0};
    paint_tube(mask, g, lung, touch, dir, rng.uniform(0.9, 1.3), kVessel);
  }

  const double reach = radius * (1.0 + spic) + 1.0;
  int64_t nodule_voxels = 0;
  for (int z = std::max(0, int(center.z - reach)); z <= std::min(g[0] - 1, int(center.z + reach)); ++z)
    for (int y = std::max(0, int(center.y - reach)); y <= std::min(g[1] - 1, int(center.y + reach)); ++y)
      for (int x = std::max(0, int(center.x - reach)); x <= std::min(g[2] - 1, int(center.x + reach)); ++x) {
        const Vec3 p{double(z), double(y), double(x)};
        const Vec3 d = p - center;
        const double dist = norm(d);
        double rad = radius;
        if (dist > 1e-9 && spic > 0) {
          const Vec3 u = d * (1.0 / dist);
          double lobe = 0;
          for (const Vec3& dk : lobes) {
            const double c = dot(u, dk);
            if (c > 0) lobe = std::max(lobe, std::pow(c, 8.0));
          }
          rad = radius * (1.0 + spic * lobe);
        }
        if (dist <= rad) {
          mask[std::size_t((z * g[1] + y) * g[2] + x)] = kNodule;
          ++nodule_voxels;
        }
      }

  // voxelization of thin lobes can strand voxels; keep only the component
  // that contains the nodule center (6-connectivity flood fill)
  {
    auto vidx = [&](int z, int y, int x) { return std::size_t((z * g[1] + y) * g[2] + x); };
    const int cz = std::clamp(int(std::lround(center.z)), 0, g[0] - 1);
    const int cy = std::clamp(int(std::lround(center.y)), 0, g[1] - 1);
    const int cx = std::clamp(int(std::lround(center.x)), 0, g[2] - 1);
    std::vector<uint8_t> keep(mask.size(), 0);
    std::vector<std::array<int, 3>> stack{{cz, cy, cx}};
    keep[vidx(cz, cy, cx)] = 1;
    while (!stack.empty()) {
      auto [z, y, x] = stack.back();
      stack.pop_back();
      static const int d6[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                   {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
      for (const auto& d : d6) {
        const int nz = z + d[0], ny = y + d[1], nx = x + d[2];
        if (nz < 0 || nz >= g[0] || ny < 0 || ny >= g[1] || nx < 0 || nx >= g[2]) continue;
        const std::size_t i = vidx(nz, ny, nx);
        if (mask[i] == kNodule && !keep[i]) {
          keep[i] = 1;
          stack.push_back({nz, ny, nx});
        }
      }
    }
    nodule_voxels = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] == kNodule) {
        if (keep[i]) ++nodule_voxels;
        else mask[i] = kLung;
      }
    }
  }

  // diameter recorded as the measured equivalent-sphere diameter
  const double volume_mm3 = double(nodule_voxels) * std::pow(spec.voxel_mm, 3.0);
  s.diameter_mm = 2.0 * std::cbrt(3.0 * volume_mm3 / (4.0 * M_PI));

  // render: class intensities -> blur -> noise -> clamp
  std::vector<double> img(static_cast<std::size_t>(nvox));
  for (int64_t i = 0; i < nvox; ++i) img[std::size_t(i)] = kIntensity[mask[std::size_t(i)]];
  gaussian_blur(img, g);
  std::vector<real> pix(static_cast<std::size_t>(nvox));
  for (int64_t i = 0; i < nvox; ++i) {
    const double v = img[std::size_t(i)] + rng.normal(0.0, kNoiseSigma);
    pix[std::size_t(i)] = static_cast<real>(std::clamp(v, 0.0, 1.0));
  }
  s.image = Tensor(Shape{g[0], g[1], g[2]}, std::move(pix));

  if (truth) {
    truth->diameter_mm = s.diameter_mm;
    truth->vessel_contact = contact;
    truth->spiculation = spic;
  }
  if (rng.uniform01() < spec.mask_availability) s.mask = std::move(mask);
  return s;
}

std::vector<std::string> assign_splits(int64_t n, double train_frac, double val_frac,
                                       double test_frac, uint64_t seed) {
  const double total = train_frac + val_frac + test_frac;
  if (total <= 0) throw TensorError("assign_splits: fractions must sum to a positive value");
  int64_t n_train = llround(train_frac / total * double(n));
  int64_t n_val = llround(val_frac / total * double(n));
  if (n_train + n_val > n) n_val = n - n_train;
  const int64_t n_test = n - n_train - n_val;
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n_train; ++i) out.push_back("train");
  for (int64_t i = 0; i < n_val; ++i) out.push_back("val");
  for (int64_t i = 0; i < n_test; ++i) out.push_back("test");
  Rng rng(Rng::mix(seed, rng_tag::kSplit));
  for (int64_t i = n - 1; i > 0; --i) {
    std::swap(out[std::size_t(i)], out[std::size_t(rng.uniform_int(0, i + 1))]);
  }
  return out;
}

void write_volume(const VolumeSample& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(kVolumeMagic, 8);
  write_raw(out, kVolumeVersion);
  for (int d : s.grid) write_raw(out, static_cast<int32_t>(d));
  write_raw(out, static_cast<float>(s.voxel_mm));
  write_raw(out, static_cast<uint8_t>(s.label));
  write_raw(out, static_cast<uint8_t>(s.has_mask() ? 1 : 0));
  write_raw(out, static_cast<uint16_t>(0));  // reserved
  write_raw(out, static_cast<float>(s.diameter_mm));
  for (real v : s.image.data()) write_raw(out, static_cast<float>(v));
  if (s.has_mask()) {
    out.write(reinterpret_cast<const char*>(s.mask.data()),
              static_cast<std::streamsize>(s.mask.size()));
  }
  if (!out) throw IoError(path + ": write failed");
}

VolumeSample read_volume(const std::string& path, const std::string& id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kVolumeMagic, 8) != 0) {
    throw IoError(path + ": not a volume file (bad magic at offset 0)");
  }
  uint32_t version = 0;
  read_raw(in, version, path, "version");
  if (version != kVolumeVersion) {
    throw IoError(path + ": unsupported volume format version " + std::to_string(version) +
                  " (expected " + std::to_string(kVolumeVersion) + ")");
  }
  VolumeSample s;
  s.id = id;
  for (int a = 0; a < 3; ++a) {
    int32_t d = 0;
    read_raw(in, d, path, "grid dims");
    if (d <= 0) throw IoError(path + ": corrupt header, nonpositive dim");
    s.grid[std::size_t(a)] = d;
  }
  float voxel = 0, diam = 0;
  uint8_t label = 0, has_mask = 0;
  uint16_t reserved = 0;
  read_raw(in, voxel, path, "voxel size");
  read_raw(in, label, path, "label");
  read_raw(in, has_mask, path, "mask flag");
  read_raw(in, reserved, path, "reserved bytes");
  read_raw(in, diam, path, "diameter");
  s.voxel_mm = voxel;
  s.label = label;
  s.diameter_mm = diam;
  const int64_t nvox = s.voxels();
  std::vector<float> buf(static_cast<std::size_t>(nvox));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(nvox * 4));
  if (!in) {
    throw IoError(path + ": truncated image payload at offset " +
                  std::to_string(static_cast<long long>(in.tellg())));
  }
  std::vector<real> pix(buf.begin(), buf.end());
  s.image = Tensor(Shape{s.grid[0], s.grid[1], s.grid[2]}, std::move(pix));
  if (has_mask) {
    s.mask.resize(static_cast<std::size_t>(nvox));
    in.read(reinterpret_cast<char*>(s.mask.data()), static_cast<std::streamsize>(nvox));
    if (!in) {
      throw IoError(path + ": truncated mask payload at offset " +
                    std::to_string(static_cast<long long>(in.tellg())));
    }
  }
  return s;
}

void write_dataset(const std::vector<VolumeSample>& samples,
                   const std::vector<std::string>& splits, const std::string& dir) {
  if (samples.size() != splits.size()) {
    throw TensorError("write_dataset: " + std::to_string(samples.size()) + " samples vs " +
                      std::to_string(splits.size()) + " split labels");
  }
  fs::create_directories(dir);
  std::ofstream man(fs::path(dir) / "manifest.tsv", std::ios::trunc);
  if (!man) throw IoError(dir + ": cannot write manifest.tsv");
  man << "id\tsplit\tlabel\tdiameter_mm\thas_mask\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const VolumeSample& s = samples[i];
    write_volume(s, (fs::path(dir) / (s.id + ".vol")).string());
    char line[160];
    std::snprintf(line, sizeof(line), "%s\t%s\t%d\t%.6f\t%d\n", s.id.c_str(), splits[i].c_str(),
                  s.label, s.diameter_mm, s.has_mask() ? 1 : 0);
    man << line;
  }
  if (!man) throw IoError(dir + ": manifest write failed");
}

std::vector<ManifestEntry> read_manifest(const std::string& dir) {
  const fs::path p = fs::path(dir) / "manifest.tsv";
  std::ifstream in(p);
  if (!in) throw IoError(p.string() + ": cannot open");
  std::string line;
  std::getline(in, line);  // header
  std::vector<ManifestEntry> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ManifestEntry e;
    char id[64], split[32];
    int label = 0, has_mask = 0;
    double diam = 0;
    if (std::sscanf(line.c_str(), "%63s %31s %d %lf %d", id, split, &label, &diam, &has_mask) !=
        5) {
      throw IoError(p.string() + ": malformed manifest line: " + line);
    }
    e.id = id;
    e.split = split;
    e.label = label;
    e.diameter_mm = diam;
    e.has_mask = has_mask != 0;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<VolumeSample> read_dataset(const std::string& dir, const std::string& split_filter) {
  std::vector<VolumeSample> out;
  for (const ManifestEntry& e : read_manifest(dir)) {
    if (!split_filter.empty() && e.split != split_filter) continue;
    out.push_back(read_volume((fs::path(dir) / (e.id + ".vol")).string(), e.id));
  }
  return out;
}

}  // namespace pare
