#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "foml/learners.hpp"
#include "foml/models.hpp"

namespace foml {

enum class StreamKind { Rainbow, Pair };

std::string to_string(StreamKind kind);
StreamKind parse_stream_kind(const std::string& s);

struct ExperimentConfig {
  // [run]
  LearnerKind learner = LearnerKind::Foml;
  std::uint64_t seed = 7;
  std::string output_dir = "run";
  std::size_t checkpoint_every = 0;  // steps; 0 writes only the final checkpoint
  std::size_t max_steps = 0;         // 0 runs the whole stream
  bool hindsight = false;
  std::size_t hindsight_steps = 200;
  double hindsight_lr = 0.001;

  // [stream]
  StreamKind stream = StreamKind::Rainbow;
  std::string dataset = "synthetic";
  std::size_t glyphs_per_class = 100;
  std::size_t samples_per_task = 200;
  std::size_t num_tasks = 56;
  std::size_t N = 10;
  double heldout_fraction = 0.2;
  bool fixed_order = false;
  std::size_t classes_per_task = 5;
  std::size_t carry_over = 2;
  bool boundaries = true;

  // [model]
  ArchKind arch = ArchKind::Mlp;
  std::vector<std::size_t> widths;  // empty means the architecture's default

  // [foml] and [baseline]
  FomlHyper foml;
  BaselineHyper baseline;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Documented defaults; the same as a value-initialized ExperimentConfig.
ExperimentConfig default_config();

// Apply "key=value" settings; `where` names the source in diagnostics.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);
std::vector<std::string> config_keys();
std::string config_section(const std::string& key);
std::string config_doc(const std::string& key);

// Flat key=value text with optional [section] headers and # comments.
void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& where = "config");
ExperimentConfig load_config_file(const std::filesystem::path& path);
// --key=value arguments; anything else is rejected.
void apply_config_flags(ExperimentConfig& cfg, const std::vector<std::string>& flags);

// Range and consistency checks. Throws ConfigError naming the key.
void validate(const ExperimentConfig& cfg);

std::string serialize_config(const ExperimentConfig& cfg);
// FNV-1a over every setting that affects results (output and checkpoint
// cadence excluded).
std::uint64_t config_hash(const ExperimentConfig& cfg);

Architecture make_architecture(const ExperimentConfig& cfg, const Shape& input_shape, std::size_t num_classes);
LearnerConfig learner_config(const ExperimentConfig& cfg, std::size_t steps_per_task);

}  // namespace foml
