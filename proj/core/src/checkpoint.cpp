#include "pare/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "pare/config.hpp"

namespace pare {
namespace {

constexpr char kMagic[8] = {'P', 'A', 'R', 'E', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void get(std::ifstream& in, T& v, const std::string& path, const char* what) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) {
    throw IoError(path + ": truncated checkpoint while reading " + what + " at offset " +
                  std::to_string(static_cast<long long>(in.tellg())));
  }
}

void put_record(std::ofstream& out, const std::string& name, const Shape& shape,
                std::span<const real> values) {
  put(out, static_cast<uint16_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put(out, static_cast<uint8_t>(shape.size()));
  for (int64_t d : shape) put(out, static_cast<uint32_t>(d));
  for (real v : values) put(out, static_cast<float>(v));
}

struct Record {
  Shape shape;
  std::vector<real> values;
};

std::map<std::string, Record> read_records(std::ifstream& in, uint32_t count,
                                           const std::string& path) {
  std::map<std::string, Record> out;
  for (uint32_t r = 0; r < count; ++r) {
    uint16_t name_len = 0;
    get(in, name_len, path, "record name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw IoError(path + ": truncated record name");
    uint8_t ndim = 0;
    get(in, ndim, path, "record rank");
    Record rec;
    int64_t numel = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      uint32_t dim = 0;
      get(in, dim, path, "record dims");
      if (dim == 0) throw IoError(path + ": record '" + name + "' has a zero dim");
      rec.shape.push_back(dim);
      numel *= dim;
    }
    std::vector<float> buf(static_cast<std::size_t>(numel));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(numel * 4));
    if (!in) {
      throw IoError(path + ": truncated tensor record '" + name + "' at offset " +
                    std::to_string(static_cast<long long>(in.tellg())));
    }
    rec.values.assign(buf.begin(), buf.end());
    if (!out.emplace(name, std::move(rec)).second) {
      throw IoError(path + ": duplicate record '" + name + "'");
    }
  }
  return out;
}

std::vector<real> stamps_to_reals(const std::vector<int64_t>& stamps) {
  std::vector<real> out(stamps.size());
  for (std::size_t i = 0; i < stamps.size(); ++i) out[i] = static_cast<real>(stamps[i]);
  return out;
}

std::vector<int64_t> reals_to_stamps(const std::vector<real>& vals) {
  std::vector<int64_t> out(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) out[i] = static_cast<int64_t>(vals[i]);
  return out;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(kMagic, 8);
  put(out, kVersion);
  put(out, static_cast<uint64_t>(state.iteration));
  const std::string config = train_config_to_json(state.cfg);
  put(out, static_cast<uint64_t>(config.size()));
  out.write(config.data(), static_cast<std::streamsize>(config.size()));

  uint32_t n_records = static_cast<uint32_t>(state.params.all().size());
  n_records += static_cast<uint32_t>(state.opt.velocity().size());
  n_records += 5;  // banks, stamps, flags
  if (!state.warm_benign.empty()) ++n_records;
  if (!state.warm_malignant.empty()) ++n_records;
  put(out, n_records);

  for (const auto& [name, t] : state.params.all()) {
    put_record(out, "param/" + name, t.shape(), t.data());
  }
  for (const auto& [name, v] : state.opt.velocity()) {
    put_record(out, "opt.v/" + name, state.params.at(name).shape(), v);
  }
  put_record(out, "bank/benign", state.bank.benign.shape(), state.bank.benign.data());
  put_record(out, "bank/malignant", state.bank.malignant.shape(), state.bank.malignant.data());
  put_record(out, "bank/last_update_benign",
             Shape{static_cast<int64_t>(state.bank.last_update_benign.size())},
             stamps_to_reals(state.bank.last_update_benign));
  put_record(out, "bank/last_update_malignant",
             Shape{static_cast<int64_t>(state.bank.last_update_malignant.size())},
             stamps_to_reals(state.bank.last_update_malignant));
  const std::vector<real> flags{state.bank_reinitialized ? real(1) : real(0)};
  put_record(out, "state/bank_reinitialized", Shape{1}, flags);

  auto put_warm = [&](const char* name, const std::vector<std::vector<real>>& rows) {
    if (rows.empty()) return;
    std::vector<real> flat;
    flat.reserve(rows.size() * rows[0].size());
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    put_record(out, name,
               Shape{static_cast<int64_t>(rows.size()), static_cast<int64_t>(rows[0].size())},
               flat);
  };
  put_warm("warmup/benign", state.warm_benign);
  put_warm("warmup/malignant", state.warm_malignant);
  if (!out) throw IoError(path + ": write failed");
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError(path + ": not a checkpoint file (bad magic at offset 0)");
  }
  uint32_t version = 0;
  get(in, version, path, "version");
  if (version != kVersion) {
    throw IoError(path + ": unsupported checkpoint format version " + std::to_string(version) +
                  " (expected " + std::to_string(kVersion) + ")");
  }
  uint64_t iteration = 0, config_len = 0;
  get(in, iteration, path, "iteration");
  get(in, config_len, path, "config length");
  if (config_len > (1ull << 20)) throw IoError(path + ": corrupt config length");
  std::string config(config_len, '\0');
  in.read(config.data(), static_cast<std::streamsize>(config_len));
  if (!in) throw IoError(path + ": truncated config text");
  uint32_t n_records = 0;
  get(in, n_records, path, "record count");
  auto records = read_records(in, n_records, path);

  TrainState state = TrainState::init(train_config_from_json(config));
  state.iteration = static_cast<int64_t>(iteration);

  auto take = [&](const std::string& name) -> Record {
    auto it = records.find(name);
    if (it == records.end()) throw IoError(path + ": missing record '" + name + "'");
    Record rec = std::move(it->second);
    records.erase(it);
    return rec;
  };

  for (auto& [name, t] : state.params.all()) {
    Record rec = take("param/" + name);
    if (rec.shape != t.shape()) {
      throw IoError(path + ": record 'param/" + name + "' has shape " + shape_str(rec.shape) +
                    ", expected " + shape_str(t.shape()));
    }
    std::copy(rec.values.begin(), rec.values.end(), t.data().begin());
  }
  state.opt = SgdMomentum(state.cfg.momentum);
  std::vector<std::string> velocity_names;
  for (const auto& [name, rec] : records) {
    if (name.rfind("opt.v/", 0) == 0) velocity_names.push_back(name);
  }
  for (const std::string& full : velocity_names) {
    Record rec = take(full);
    const std::string pname = full.substr(6);
    if (!state.params.contains(pname)) {
      throw IoError(path + ": velocity record for unknown param '" + pname + "'");
    }
    state.opt.velocity()[pname] = std::move(rec.values);
  }

  Record benign = take("bank/benign");
  Record malignant = take("bank/malignant");
  state.bank.benign = Tensor(benign.shape, std::move(benign.values));
  state.bank.malignant = Tensor(malignant.shape, std::move(malignant.values));
  state.bank.lambda = state.cfg.model.lambda;
  state.bank.last_update_benign = reals_to_stamps(take("bank/last_update_benign").values);
  state.bank.last_update_malignant = reals_to_stamps(take("bank/last_update_malignant").values);
  state.bank.validate();
  state.bank_reinitialized = take("state/bank_reinitialized").values[0] != real(0);

  auto take_warm = [&](const char* name, std::vector<std::vector<real>>& rows) {
    auto it = records.find(name);
    if (it == records.end()) return;
    Record rec = std::move(it->second);
    records.erase(it);
    if (rec.shape.size() != 2) {
      throw IoError(path + ": record '" + std::string(name) + "' must be rank 2");
    }
    const int64_t n = rec.shape[0], d = rec.shape[1];
    rows.assign(static_cast<std::size_t>(n), {});
    for (int64_t i = 0; i < n; ++i) {
      rows[std::size_t(i)].assign(rec.values.begin() + i * d, rec.values.begin() + (i + 1) * d);
    }
  };
  take_warm("warmup/benign", state.warm_benign);
  take_warm("warmup/malignant", state.warm_malignant);
  return state;
}

}  // namespace pare
