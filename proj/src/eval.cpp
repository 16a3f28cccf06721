#include "foml/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "foml/error.hpp"
#include "foml/optim.hpp"

namespace foml {

void MetricsRecord::add_step(StepMetrics m) { per_step.push_back(std::move(m)); }

void MetricsRecord::add_task(TaskMetrics m) {
  if (!per_task.empty() && m.task_index <= per_task.back().task_index)
    throw ContractError("task metrics must arrive in increasing task order");
  if (!(m.error_rate >= 0.0 && m.error_rate <= 1.0)) throw ContractError("error rate outside [0, 1]");
  if (m.hindsight_loss) {
    const double prev = regret_series.empty() ? 0.0 : regret_series.back();
    regret_series.push_back(prev + (m.online_loss - *m.hindsight_loss));
  }
  per_task.push_back(std::move(m));
}

double task_error_rate(const Architecture& arch, const ParameterVector& params, const LabeledBatch& heldout) {
  if (heldout.size() == 0) throw ContractError("task error rate needs a non-empty heldout set");
  const auto pred = predicted_labels(arch, predict(arch, params, heldout));
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != heldout.labels[i];
  return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

double regret(std::span<const double> online_losses, std::span<const double> hindsight_losses) {
  if (online_losses.size() != hindsight_losses.size())
    throw ContractError("regret needs equally long loss sequences");
  double r = 0.0;
  for (std::size_t t = 0; t < online_losses.size(); ++t) r += online_losses[t] - hindsight_losses[t];
  return r;
}

double hindsight_loss(const Architecture& arch, const LabeledBatch& data, std::uint64_t seed, std::size_t steps,
                      double lr) {
  ParameterVector p = init_params(arch, seed);
  OptimizerConfig cfg;
  cfg.lr = lr;
  Optimizer opt(cfg, p);
  for (std::size_t s = 0; s < steps; ++s) p = opt.step(p, loss_and_grad(arch, p, data).grad);
  return batch_loss(arch, p, data);
}

double mean_error(const MetricsRecord& record, std::size_t first, std::size_t count) {
  if (count == 0 || first + count > record.per_task.size()) throw ContractError("mean_error range outside the record");
  double s = 0.0;
  for (std::size_t t = first; t < first + count; ++t) s += record.per_task[t].error_rate;
  return s / static_cast<double>(count);
}

double first_tasks_error(const MetricsRecord& record, std::size_t count) {
  return mean_error(record, 0, std::min(count, record.per_task.size()));
}

double last_tasks_error(const MetricsRecord& record, std::size_t count) {
  const std::size_t n = std::min(count, record.per_task.size());
  return mean_error(record, record.per_task.size() - n, n);
}

void emit_curve(const MetricsRecord& record, const std::filesystem::path& path) {
  if (record.per_task.empty()) throw ContractError("cannot emit an empty learning curve");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << "task_index,error_rate,cum_mean_error\n";
  double sum = 0.0;
  char line[96];
  for (std::size_t t = 0; t < record.per_task.size(); ++t) {
    const auto& m = record.per_task[t];
    sum += m.error_rate;
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f\n", m.task_index, m.error_rate, sum / static_cast<double>(t + 1));
    os << line;
  }
  if (!os) throw Error("failed writing " + path.string());
}

void emit_step_log(const MetricsRecord& record, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  for (const auto& s : record.per_step) {
    nlohmann::ordered_json j;
    j["j"] = s.j;
    j["loss"] = s.online_loss;
    j["val_loss"] = s.val_loss ? nlohmann::ordered_json(*s.val_loss) : nlohmann::ordered_json(nullptr);
    j["correct"] = s.correct;
    j["count"] = s.count;
    os << j.dump() << '\n';
  }
}

}  // namespace foml
