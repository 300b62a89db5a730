#pragma once

#include <string>

#include "pare/data.hpp"
#include "pare/train.hpp"

namespace pare {

// Bad user input (config files, flags). CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Canonical JSON text (sorted keys, stable float formatting): equal configs
// produce byte-identical strings.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

std::string phantom_spec_to_json(const PhantomSpec& spec);
// `require_core_fields` enforces grid / malignant_fraction / mask_availability
// and names the missing field.
PhantomSpec phantom_spec_from_json(const std::string& text, bool require_core_fields = false);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace pare
