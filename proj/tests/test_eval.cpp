#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "foml/error.hpp"
#include "foml/eval.hpp"
#include "foml/optim.hpp"
#include "test_util.hpp"

using namespace foml;
using namespace foml::testing;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("foml_eval_" + name); }

MetricsRecord record_of(const std::vector<double>& errors) {
  MetricsRecord r;
  for (std::size_t t = 0; t < errors.size(); ++t) r.add_task({t, errors[t], 1.0, std::nullopt});
  return r;
}

}  // namespace

TEST(TaskErrorRate, ChanceLevelForRandomParams) {
  const Architecture arch = Architecture::mlp({16}, 10, Shape{3, 8, 8});
  LabeledBatch b = random_batch(arch, 2000, 3);
  for (std::size_t i = 0; i < b.size(); ++i) b.labels[i] = static_cast<int>(i % 10);
  const double err = task_error_rate(arch, init_params(arch, 4), b);
  const double sigma = std::sqrt(0.9 * 0.1 / 2000.0);
  EXPECT_NEAR(err, 0.9, 3 * sigma);
}

TEST(TaskErrorRate, MemorizedSetIsPerfect) {
  const Architecture arch = Architecture::mlp({32}, 10, Shape{1, 4, 4});
  LabeledBatch b = random_batch(arch, 10, 5);
  for (std::size_t i = 0; i < 10; ++i) b.labels[i] = static_cast<int>(i);
  ParameterVector p = init_params(arch, 6);
  OptimizerConfig cfg;
  cfg.lr = 0.05;
  Optimizer opt(cfg, p);
  for (int s = 0; s < 300; ++s) p = opt.step(p, loss_and_grad(arch, p, b).grad);
  EXPECT_EQ(task_error_rate(arch, p, b), 0.0);
}

TEST(TaskErrorRate, ConstantPredictorOnBalancedPairs) {
  const Architecture arch = Architecture::siamese7({2, 2, 2, 2, 2, 2, 2}, Shape{1, 4, 4});
  ParameterVector p = init_params(arch, 1);
  p[p.num_segments() - 2] = Tensor(p[p.num_segments() - 2].shape(), 0.0);
  LabeledBatch b = random_batch(arch, 20, 2);
  for (std::size_t i = 0; i < 20; ++i) b.labels[i] = static_cast<int>(i % 2);
  for (double bias : {-1.0, 1.0}) {
    p[p.num_segments() - 1] = Tensor(Shape{1}, bias);
    EXPECT_EQ(task_error_rate(arch, p, b), 0.5);
  }
}

TEST(TaskErrorRate, EmptyHeldoutIsRejected) {
  const Architecture arch = Architecture::mlp({4}, 2, Shape{1, 2, 2});
  LabeledBatch empty;
  EXPECT_THROW(task_error_rate(arch, init_params(arch, 1), empty), ContractError);
}

TEST(Regret, ClosedForms) {
  const std::vector<double> h{0.5, 1.0, 0.2, 0.9, 0.4, 0.3, 0.8, 0.1, 0.6, 0.7};
  EXPECT_EQ(regret(h, h), 0.0);
  std::vector<double> o = h;
  for (auto& v : o) v += 0.1;
  EXPECT_NEAR(regret(o, h), 1.0, 1e-12);
  EXPECT_THROW(regret(std::span(o).first(3), h), ContractError);
}

TEST(Regret, SeriesAccumulatesPerTask) {
  MetricsRecord r;
  r.add_task({0, 0.5, 2.0, 1.5});
  r.add_task({1, 0.5, 1.0, 0.75});
  EXPECT_EQ(r.regret_series, (std::vector<double>{0.5, 0.75}));
}

TEST(HindsightLoss, ImprovesOnInitAndIsDeterministic) {
  const Architecture arch = Architecture::mlp({8}, 3, Shape{1, 2, 2});
  const LabeledBatch b = random_batch(arch, 20, 1);
  const double h = hindsight_loss(arch, b, 5, 100, 0.01);
  EXPECT_LT(h, batch_loss(arch, init_params(arch, 5), b));
  EXPECT_EQ(h, hindsight_loss(arch, b, 5, 100, 0.01));
}

TEST(MetricsRecord, Invariants) {
  MetricsRecord r;
  r.add_task({2, 0.1, 0, std::nullopt});
  EXPECT_THROW(r.add_task({2, 0.1, 0, std::nullopt}), ContractError);
  EXPECT_THROW(r.add_task({1, 0.1, 0, std::nullopt}), ContractError);
  EXPECT_THROW(r.add_task({3, 1.5, 0, std::nullopt}), ContractError);
  EXPECT_THROW(r.add_task({3, -0.1, 0, std::nullopt}), ContractError);
  EXPECT_EQ(r.per_task.size(), 1u);
}

TEST(MetricsRecord, FirstAndLastTaskMeans) {
  std::vector<double> e;
  for (int t = 0; t < 30; ++t) e.push_back(t < 10 ? 0.8 : (t >= 20 ? 0.2 : 0.5));
  const MetricsRecord r = record_of(e);
  EXPECT_NEAR(first_tasks_error(r, 10), 0.8, 1e-15);
  EXPECT_NEAR(last_tasks_error(r, 10), 0.2, 1e-15);
  EXPECT_NEAR(mean_error(r, 10, 10), 0.5, 1e-15);
  EXPECT_THROW(mean_error(r, 25, 10), ContractError);
}

TEST(EmitCurve, TwoTasksGiveThreeLines) {
  const fs::path p = temp_file("two.csv");
  emit_curve(record_of({0.3, 0.1}), p);
  EXPECT_EQ(read_file(p), "task_index,error_rate,cum_mean_error\n0,0.300000,0.300000\n1,0.100000,0.200000\n");
}

TEST(EmitCurve, ConstantErrorGivesConstantCumulativeMean) {
  const fs::path p = temp_file("const.csv");
  emit_curve(record_of(std::vector<double>(25, 0.2)), p);
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "0.200000");
  }
  EXPECT_EQ(rows, 25u);
}

TEST(EmitCurve, CumulativeMeanIsRunningMeanAndBytesAreStable) {
  std::vector<double> e;
  Rng rng(4);
  for (int t = 0; t < 40; ++t) e.push_back(rng.uniform());
  const MetricsRecord r = record_of(e);
  const fs::path a = temp_file("a.csv"), b = temp_file("b.csv");
  emit_curve(r, a);
  emit_curve(r, b);
  EXPECT_EQ(read_file(a), read_file(b));
  std::ifstream is(a);
  std::string line;
  std::getline(is, line);
  for (std::size_t t = 0; std::getline(is, line); ++t) {
    double sum = 0;
    for (std::size_t k = 0; k <= t; ++k) sum += e[k];
    char expect[64];
    std::snprintf(expect, sizeof expect, "%zu,%.6f,%.6f", t, e[t], sum / static_cast<double>(t + 1));
    EXPECT_EQ(line, expect);
  }
  EXPECT_THROW(emit_curve(MetricsRecord{}, a), ContractError);
}

TEST(EmitStepLog, JsonLines) {
  MetricsRecord r;
  r.add_step({0, 2.5, 1.25, 3, 8});
  r.add_step({1, 2.0, std::nullopt, 4, 8});
  const fs::path p = temp_file("steps.jsonl");
  emit_step_log(r, p);
  EXPECT_EQ(read_file(p),
            "{\"j\":0,\"loss\":2.5,\"val_loss\":1.25,\"correct\":3,\"count\":8}\n"
            "{\"j\":1,\"loss\":2.0,\"val_loss\":null,\"correct\":4,\"count\":8}\n");
}
