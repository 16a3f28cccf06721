#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "foml/models.hpp"
#include "foml/params.hpp"

namespace foml {

struct StepMetrics {
  std::size_t j = 0;
  double online_loss = 0.0;
  std::optional<double> val_loss;
  std::size_t correct = 0;
  std::size_t count = 0;

  friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

struct TaskMetrics {
  std::size_t task_index = 0;
  double error_rate = 0.0;
  double online_loss = 0.0;  // mean pre-update loss over the task's steps
  std::optional<double> hindsight_loss;

  friend bool operator==(const TaskMetrics&, const TaskMetrics&) = default;
};

struct MetricsRecord {
  std::vector<StepMetrics> per_step;
  std::vector<TaskMetrics> per_task;
  // Running sum of online minus hindsight loss, one entry per task that has a
  // hindsight estimate.
  std::vector<double> regret_series;

  void add_step(StepMetrics m);
  void add_task(TaskMetrics m);

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

// Fraction misclassified; argmax with ties to the lower class, or sigmoid > 0.5 for pairs.
double task_error_rate(const Architecture& arch, const ParameterVector& params, const LabeledBatch& heldout);

double regret(std::span<const double> online_losses, std::span<const double> hindsight_losses);

// Loss on `data` after `steps` full-batch Adam steps from a fresh init: the
// best-in-hindsight estimate.
double hindsight_loss(const Architecture& arch, const LabeledBatch& data, std::uint64_t seed, std::size_t steps = 200,
                      double lr = 0.001);

// Mean of per-task error rates over tasks [first, first + count).
double mean_error(const MetricsRecord& record, std::size_t first, std::size_t count);
double first_tasks_error(const MetricsRecord& record, std::size_t count);
double last_tasks_error(const MetricsRecord& record, std::size_t count);

// "task_index,error_rate,cum_mean_error" plus one row per task.
void emit_curve(const MetricsRecord& record, const std::filesystem::path& path);
// One JSON object per step.
void emit_step_log(const MetricsRecord& record, const std::filesystem::path& path);

}  // namespace foml
