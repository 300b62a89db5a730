#include "pare/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pare {

using nlohmann::json;

namespace {

json model_to_json(const ModelConfig& m) {
  return json{
      {"level_channels", m.backbone.level_channels},
      {"embed_dim", m.backbone.embed_dim},
      {"input_shape", m.backbone.input_shape},
      {"window", m.tokenizer.window},
      {"stride", m.tokenizer.stride},
      {"layers", m.layers},
      {"heads", m.heads},
      {"n_prototypes", m.n_prototypes},
      {"lambda", m.lambda},
      {"deep_supervision", m.deep_supervision},
      {"pos_for_nodule_token", m.pos_for_nodule_token},
  };
}

template <typename T>
void get_to_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m = ModelConfig::desk();
  get_to_if(j, "level_channels", m.backbone.level_channels);
  get_to_if(j, "embed_dim", m.backbone.embed_dim);
  get_to_if(j, "input_shape", m.backbone.input_shape);
  get_to_if(j, "window", m.tokenizer.window);
  get_to_if(j, "stride", m.tokenizer.stride);
  get_to_if(j, "layers", m.layers);
  get_to_if(j, "heads", m.heads);
  get_to_if(j, "n_prototypes", m.n_prototypes);
  get_to_if(j, "lambda", m.lambda);
  get_to_if(j, "deep_supervision", m.deep_supervision);
  get_to_if(j, "pos_for_nodule_token", m.pos_for_nodule_token);
  m.tokenizer.embed_dim = m.backbone.embed_dim;
  return m;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
  json j{
      {"model", model_to_json(cfg.model)},
      {"arm", arm_name(cfg.arm)},
      {"batch_size", cfg.batch_size},
      {"total_iters", cfg.total_iters},
      {"base_lr", cfg.base_lr},
      {"momentum", cfg.momentum},
      {"warmup_frac", cfg.warmup_frac},
      {"clip_norm", cfg.clip_norm},
      {"teacher_forcing", cfg.teacher_forcing},
      {"bank_warmup_iters", cfg.bank_warmup_iters},
      {"balanced_sampling", cfg.balanced_sampling},
      {"seed", cfg.seed},
  };
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  TrainConfig cfg = TrainConfig::desk();
  try {
    if (j.contains("preset")) {
      const std::string preset = j.at("preset").get<std::string>();
      if (preset == "paper") cfg = TrainConfig::paper();
      else if (preset == "desk") cfg = TrainConfig::desk();
      else throw ConfigError("config: unknown preset '" + preset + "'");
    }
    if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
    if (j.contains("arm")) cfg.arm = arm_from_name(j.at("arm").get<std::string>());
    get_to_if(j, "batch_size", cfg.batch_size);
    get_to_if(j, "total_iters", cfg.total_iters);
    get_to_if(j, "base_lr", cfg.base_lr);
    get_to_if(j, "momentum", cfg.momentum);
    get_to_if(j, "warmup_frac", cfg.warmup_frac);
    get_to_if(j, "clip_norm", cfg.clip_norm);
    get_to_if(j, "teacher_forcing", cfg.teacher_forcing);
    get_to_if(j, "bank_warmup_iters", cfg.bank_warmup_iters);
    get_to_if(j, "balanced_sampling", cfg.balanced_sampling);
    get_to_if(j, "seed", cfg.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad field: ") + e.what());
  }
  return cfg;
}

std::string phantom_spec_to_json(const PhantomSpec& spec) {
  json j{
      {"grid", spec.grid},
      {"voxel_mm", spec.voxel_mm},
      {"malignant_fraction", spec.malignant_fraction},
      {"mask_availability", spec.mask_availability},
      {"seed", spec.seed},
      {"effects",
       json{
           {"diam_mean_benign", spec.effects.diam_mean_benign},
           {"diam_mean_malignant", spec.effects.diam_mean_malignant},
           {"diam_sd_benign", spec.effects.diam_sd_benign},
           {"diam_sd_malignant", spec.effects.diam_sd_malignant},
           {"contact_prob_benign", spec.effects.contact_prob_benign},
           {"contact_prob_malignant", spec.effects.contact_prob_malignant},
           {"spic_max_benign", spec.effects.spic_max_benign},
           {"spic_min_malignant", spec.effects.spic_min_malignant},
           {"spic_max_malignant", spec.effects.spic_max_malignant},
       }},
  };
  return j.dump(2);
}

PhantomSpec phantom_spec_from_json(const std::string& text, bool require_core_fields) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("phantom spec: invalid JSON: ") + e.what());
  }
  if (require_core_fields) {
    for (const char* key : {"grid", "malignant_fraction", "mask_availability"}) {
      if (!j.contains(key)) {
        throw ConfigError(std::string("phantom spec: missing required field '") + key + "'");
      }
    }
  }
  PhantomSpec spec;
  try {
    get_to_if(j, "grid", spec.grid);
    get_to_if(j, "voxel_mm", spec.voxel_mm);
    get_to_if(j, "malignant_fraction", spec.malignant_fraction);
    get_to_if(j, "mask_availability", spec.mask_availability);
    get_to_if(j, "seed", spec.seed);
    if (j.contains("effects")) {
      const json& e = j.at("effects");
      get_to_if(e, "diam_mean_benign", spec.effects.diam_mean_benign);
      get_to_if(e, "diam_mean_malignant", spec.effects.diam_mean_malignant);
      get_to_if(e, "diam_sd_benign", spec.effects.diam_sd_benign);
      get_to_if(e, "diam_sd_malignant", spec.effects.diam_sd_malignant);
      get_to_if(e, "contact_prob_benign", spec.effects.contact_prob_benign);
      get_to_if(e, "contact_prob_malignant", spec.effects.contact_prob_malignant);
      get_to_if(e, "spic_max_benign", spec.effects.spic_max_benign);
      get_to_if(e, "spic_min_malignant", spec.effects.spic_min_malignant);
      get_to_if(e, "spic_max_malignant", spec.effects.spic_max_malignant);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("phantom spec: bad field: ") + e.what());
  }
  return spec;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << content;
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace pare
