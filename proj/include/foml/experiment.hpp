#pragma once

#include <filesystem>
#include <memory>

#include "foml/config.hpp"
#include "foml/dataset.hpp"
#include "foml/eval.hpp"
#include "foml/learners.hpp"
#include "foml/streams.hpp"

namespace foml {

Dataset load_base_dataset(const ExperimentConfig& cfg);
Stream build_stream(const ExperimentConfig& cfg, const Dataset& base);

struct RunResult {
  MetricsRecord metrics;
  std::size_t steps = 0;  // stream position when the run stopped
  bool finished = false;  // the stream was exhausted
};

// One experiment: stream, learner and metrics, driven step by step. Task
// boundaries are derived by the harness from the stream layout and passed
// only to learners that declare they need them.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);
  Experiment(ExperimentConfig cfg, Stream stream);

  // Advance one stream step; false once the stream is exhausted.
  bool step();
  // Steps until the stream ends or max_steps is reached, checkpointing on the
  // configured cadence.
  RunResult run();

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

  const ExperimentConfig& config() const { return cfg_; }
  const Architecture& arch() const { return arch_; }
  const Stream& stream() const { return stream_; }
  Learner& learner() { return *learner_; }
  const MetricsRecord& metrics() const { return metrics_; }

 private:
  void finish_task(std::size_t task_index);

  ExperimentConfig cfg_;
  Stream stream_;
  Architecture arch_;
  std::unique_ptr<Learner> learner_;
  MetricsRecord metrics_;
  double task_loss_sum_ = 0.0;
  std::size_t task_steps_ = 0;
};

// Full run with artifacts written to cfg.output_dir: config.txt, curve.csv,
// steps.jsonl, checkpoint.bin and meta.txt (the only file with timestamps).
// A NaN mid-run writes checkpoint_failure.bin and rethrows.
RunResult run_experiment(const ExperimentConfig& cfg);
RunResult resume_experiment(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);

}  // namespace foml
