#include "foml/experiment.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "foml/error.hpp"
#include "foml/serialize.hpp"

namespace foml {

namespace {

constexpr const char* kCheckpointMagic = "FOMLCKPT";
constexpr const char* kCheckpointVersion = "v1";

Architecture arch_for(const ExperimentConfig& cfg, const Stream& stream, std::size_t num_classes) {
  Architecture a = make_architecture(cfg, stream.input_shape(), num_classes);
  a.validate();
  return a;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

void write_metrics(BinaryWriter& w, const MetricsRecord& m) {
  w.u64(m.per_step.size());
  for (const auto& s : m.per_step) {
    w.u64(s.j);
    w.f64(s.online_loss);
    w.boolean(s.val_loss.has_value());
    w.f64(s.val_loss.value_or(0.0));
    w.u64(s.correct);
    w.u64(s.count);
  }
  w.u64(m.per_task.size());
  for (const auto& t : m.per_task) {
    w.u64(t.task_index);
    w.f64(t.error_rate);
    w.f64(t.online_loss);
    w.boolean(t.hindsight_loss.has_value());
    w.f64(t.hindsight_loss.value_or(0.0));
  }
  w.doubles(m.regret_series);
}

MetricsRecord read_metrics(BinaryReader& r) {
  MetricsRecord m;
  m.per_step.resize(r.u64());
  for (auto& s : m.per_step) {
    s.j = r.u64();
    s.online_loss = r.f64();
    const bool has = r.boolean();
    const double v = r.f64();
    if (has) s.val_loss = v;
    s.correct = r.u64();
    s.count = r.u64();
  }
  m.per_task.resize(r.u64());
  for (auto& t : m.per_task) {
    t.task_index = r.u64();
    t.error_rate = r.f64();
    t.online_loss = r.f64();
    const bool has = r.boolean();
    const double v = r.f64();
    if (has) t.hindsight_loss = v;
  }
  m.regret_series = r.doubles();
  return m;
}

}  // namespace

Dataset load_base_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset == "synthetic") return make_glyph_dataset(cfg.glyphs_per_class, derive_seed(cfg.seed, 100));
  return load_dataset(cfg.dataset);
}

Stream build_stream(const ExperimentConfig& cfg, const Dataset& base) {
  StreamOptions opt;
  opt.batch_size = cfg.N;
  opt.heldout_fraction = cfg.heldout_fraction;
  opt.fixed_order = cfg.fixed_order;
  if (cfg.stream == StreamKind::Rainbow)
    return make_rainbow_stream(base, cfg.samples_per_task, derive_seed(cfg.seed, 101), cfg.num_tasks, opt);
  return make_pair_stream(base, cfg.num_tasks, cfg.samples_per_task, derive_seed(cfg.seed, 101), cfg.classes_per_task,
                          cfg.carry_over, opt);
}

Experiment::Experiment(ExperimentConfig cfg) : Experiment(cfg, [&] {
  validate(cfg);
  return build_stream(cfg, load_base_dataset(cfg));
}()) {}

Experiment::Experiment(ExperimentConfig cfg, Stream stream) : cfg_(std::move(cfg)), stream_(std::move(stream)) {
  validate(cfg_);
  if (stream_.task(0).heldout.size() == 0) throw ConfigError("heldout_fraction leaves no heldout data for evaluation");
  const std::size_t classes = cfg_.stream == StreamKind::Pair ? 2 : [&] {
    int mx = 0;
    for (std::size_t t = 0; t < stream_.num_tasks(); ++t)
      for (int y : stream_.task(t).stream.labels) mx = std::max(mx, y);
    return static_cast<std::size_t>(mx + 1);
  }();
  arch_ = arch_for(cfg_, stream_, std::max<std::size_t>(classes, 2));
  learner_ = make_learner(arch_, learner_config(cfg_, stream_.steps_per_task()), cfg_.seed);
}

bool Experiment::step() {
  auto sb = stream_.next_batch();
  if (!sb) return false;
  const std::size_t S = stream_.steps_per_task();
  const bool boundary = sb->step % S == 0;
  Observation obs{std::move(sb->batch), sb->step};
  StepReport rep;
  if (auto* aware = dynamic_cast<BoundaryAwareLearner*>(learner_.get())) {
    rep = aware->step(obs, boundary);
  } else if (auto* blind = dynamic_cast<BoundaryFreeLearner*>(learner_.get())) {
    rep = blind->step(obs);
  } else {
    throw ContractError("learner exposes no step interface");
  }
  metrics_.add_step({obs.step, rep.loss, rep.val_loss, rep.correct, rep.count});
  task_loss_sum_ += rep.loss;
  ++task_steps_;
  if ((obs.step + 1) % S == 0) finish_task(obs.step / S);
  return true;
}

void Experiment::finish_task(std::size_t task_index) {
  const auto& task = stream_.task(task_index);
  TaskMetrics m;
  m.task_index = task_index;
  m.error_rate = task_error_rate(arch_, learner_->prediction_params(), task.heldout);
  m.online_loss = task_loss_sum_ / static_cast<double>(task_steps_);
  if (cfg_.hindsight)
    m.hindsight_loss = hindsight_loss(arch_, task.stream, derive_seed(cfg_.seed, 1000 + task_index), cfg_.hindsight_steps,
                                      cfg_.hindsight_lr);
  metrics_.add_task(m);
  task_loss_sum_ = 0.0;
  task_steps_ = 0;
}

RunResult Experiment::run() {
  const std::filesystem::path out = cfg_.output_dir;
  while (cfg_.max_steps == 0 || stream_.position() < cfg_.max_steps) {
    try {
      if (!step()) break;
    } catch (const NumericError&) {
      std::filesystem::create_directories(out);
      save_checkpoint(out / "checkpoint_failure.bin");
      throw;
    }
    if (cfg_.checkpoint_every && stream_.position() % cfg_.checkpoint_every == 0) {
      std::filesystem::create_directories(out);
      save_checkpoint(out / ("checkpoint_" + std::to_string(stream_.position()) + ".bin"));
    }
  }
  return {metrics_, stream_.position(), stream_.position() >= stream_.total_steps()};
}

void Experiment::save_checkpoint(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("cannot write checkpoint " + path.string());
    os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    BinaryWriter w(os);
    w.u64(config_hash(cfg_));
    w.str(to_string(learner_->kind()));
    w.str(arch_.describe());
    w.u64(stream_.position());
    w.f64(task_loss_sum_);
    w.u64(task_steps_);
    write_metrics(w, metrics_);
    learner_->save(w);
    if (!os) throw Error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

void Experiment::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path.string());
  std::string header;
  std::getline(is, header);
  const std::string magic = header.substr(0, header.find(' '));
  if (magic != kCheckpointMagic) throw FormatError("not a checkpoint (bad magic header) in " + path.string());
  const std::string version = header.size() > magic.size() ? header.substr(magic.size() + 1) : "";
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version '" + version + "' (expected " + kCheckpointVersion + ")");
  BinaryReader r(is);
  if (r.u64() != config_hash(cfg_))
    throw ConfigError("config hash mismatch: the checkpoint was written with different settings");
  if (r.str() != to_string(learner_->kind())) throw ConfigError("checkpoint is for a different learner");
  if (r.str() != arch_.describe()) throw ConfigError("checkpoint is for a different architecture");
  const auto position = r.u64();
  if (position > stream_.total_steps()) throw FormatError("checkpoint position beyond the end of the stream");
  task_loss_sum_ = r.f64();
  task_steps_ = r.u64();
  metrics_ = read_metrics(r);
  learner_->load(r);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint");
  stream_.skip(position - stream_.position());
}

namespace {

RunResult finish_run(Experiment& exp, const std::string& started) {
  const ExperimentConfig& cfg = exp.config();
  const std::filesystem::path out = cfg.output_dir;
  const RunResult result = exp.run();
  if (!result.metrics.per_task.empty()) emit_curve(result.metrics, out / "curve.csv");
  emit_step_log(result.metrics, out / "steps.jsonl");
  exp.save_checkpoint(out / "checkpoint.bin");
  std::ofstream meta(out / "meta.txt");
  meta << "started = " << started << "\nfinished = " << timestamp() << "\nsteps = " << result.steps << "\n";
  return result;
}

void prepare_output(const ExperimentConfig& cfg) {
  const std::filesystem::path out = cfg.output_dir;
  std::filesystem::create_directories(out);
  std::ofstream os(out / "config.txt", std::ios::binary);
  if (!os) throw Error("cannot write to output directory " + out.string());
  os << serialize_config(cfg);
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  const std::string started = timestamp();
  Experiment exp(cfg);
  prepare_output(cfg);
  return finish_run(exp, started);
}

RunResult resume_experiment(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint) {
  const std::string started = timestamp();
  Experiment exp(cfg);
  exp.load_checkpoint(checkpoint);
  prepare_output(cfg);
  return finish_run(exp, started);
}

}  // namespace foml
