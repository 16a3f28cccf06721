#include "foml/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "foml/error.hpp"

namespace foml {

std::string to_string(StreamKind kind) { return kind == StreamKind::Rainbow ? "rainbow" : "pair"; }

StreamKind parse_stream_kind(const std::string& s) {
  if (s == "rainbow") return StreamKind::Rainbow;
  if (s == "pair") return StreamKind::Pair;
  throw ConfigError("unknown stream '" + s + "' (expected rainbow or pair)");
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(to_uint(key, trim(tok)));
  return out;
}

std::string from_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string section;
  std::string doc;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  bool affects_results = true;
};

#define FOML_DOUBLE(sec, key, member, doc)                                              \
  {key, Field{sec, doc, [](const ExperimentConfig& c) { return fmt_double(c.member); }, \
              [](ExperimentConfig& c, const std::string& v) { c.member = to_double(key, v); }}}
#define FOML_UINT(sec, key, member, doc)                                                    \
  {key, Field{sec, doc, [](const ExperimentConfig& c) { return std::to_string(c.member); }, \
              [](ExperimentConfig& c, const std::string& v) { c.member = to_uint(key, v); }}}
#define FOML_BOOL(sec, key, member, doc)                                                       \
  {key, Field{sec, doc, [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }, \
              [](ExperimentConfig& c, const std::string& v) { c.member = to_bool(key, v); }}}
#define FOML_ENUM(sec, key, member, parse, doc)                                         \
  {key, Field{sec, doc, [](const ExperimentConfig& c) { return to_string(c.member); }, \
              [](ExperimentConfig& c, const std::string& v) { c.member = parse(v); }}}

// Ordered as they appear in a serialized config.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t{
        FOML_ENUM("run", "learner", learner, parse_learner_kind, "foml, tfs, toe, ftl or ftml"),
        FOML_UINT("run", "seed", seed, "seed for data, initialization and sampling"),
        {"output_dir",
         Field{"run", "directory for config copy, curve, step log and checkpoints",
               [](const ExperimentConfig& c) { return c.output_dir; },
               [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; }, false}},
        FOML_UINT("run", "checkpoint_every", checkpoint_every, "steps between checkpoints; 0 for final only"),
        FOML_UINT("run", "max_steps", max_steps, "stop after this many steps; 0 runs the whole stream"),
        FOML_BOOL("run", "hindsight", hindsight, "train a per-task hindsight model to report regret"),
        FOML_UINT("run", "hindsight_steps", hindsight_steps, "full-batch Adam steps for each hindsight model"),
        FOML_DOUBLE("run", "hindsight_lr", hindsight_lr, "learning rate of the hindsight models"),

        FOML_ENUM("stream", "stream", stream, parse_stream_kind, "rainbow or pair"),
        {"dataset",
         Field{"stream", "'synthetic' for generated glyphs, or a FOMLDS v1 file",
               [](const ExperimentConfig& c) { return c.dataset; },
               [](ExperimentConfig& c, const std::string& v) { c.dataset = v; }}},
        FOML_UINT("stream", "glyphs_per_class", glyphs_per_class, "items per class in the synthetic dataset"),
        FOML_UINT("stream", "samples_per_task", samples_per_task, "datapoints per task, heldout included"),
        FOML_UINT("stream", "num_tasks", num_tasks, "number of tasks in the stream"),
        FOML_UINT("stream", "N", N, "datapoints per stream step"),
        FOML_DOUBLE("stream", "heldout_fraction", heldout_fraction, "share of each task kept for evaluation"),
        FOML_BOOL("stream", "fixed_order", fixed_order, "rainbow tasks in enumeration order instead of shuffled"),
        FOML_UINT("stream", "classes_per_task", classes_per_task, "pair stream: classes per task"),
        FOML_UINT("stream", "carry_over", carry_over, "pair stream: classes kept from the previous task"),
        FOML_BOOL("stream", "boundaries", boundaries, "whether the stream reports task boundaries"),

        FOML_ENUM("model", "arch", arch, parse_arch_kind, "mlp, convnet4 or siamese7"),
        {"widths",
         Field{"model", "hidden widths or filter counts, comma separated; empty for the default",
               [](const ExperimentConfig& c) { return from_list(c.widths); },
               [](ExperimentConfig& c, const std::string& v) { c.widths = to_list("widths", v); }}},

        FOML_DOUBLE("foml", "alpha1", foml.alpha1, "online learning rate"),
        FOML_DOUBLE("foml", "alpha2", foml.alpha2, "meta learning rate"),
        FOML_DOUBLE("foml", "beta1", foml.beta1, "weight of the pull toward the meta parameters"),
        FOML_DOUBLE("foml", "beta2", foml.beta2, "weight of the meta parameters' pull toward recent online parameters"),
        FOML_UINT("foml", "K", foml.K, "online steps differentiated through per meta update"),
        FOML_UINT("foml", "meta_batch", foml.meta_batch, "buffer samples per meta update"),
        FOML_DOUBLE("foml", "train_fraction", foml.train_fraction, "share of each step's batch used for the online update"),
        FOML_BOOL("foml", "meta_updates", foml.meta_updates, "false disables meta updates"),
        FOML_BOOL("foml", "exclude_current_batch", foml.exclude_current_batch, "meta batches skip the newest datapoints"),
        FOML_ENUM("foml", "online_optimizer", foml.online_optimizer, parse_optimizer_kind, "sgd or adam"),
        FOML_ENUM("foml", "meta_optimizer", foml.meta_optimizer, parse_optimizer_kind, "sgd or adam"),

        FOML_DOUBLE("baseline", "lr", baseline.lr, "Adam learning rate for TFS, TOE and FTL"),
        FOML_UINT("baseline", "task_updates", baseline.task_updates, "updates per task on current-task data"),
        FOML_UINT("baseline", "toe_updates", baseline.toe_updates, "buffer updates per task"),
        FOML_UINT("baseline", "toe_increment", baseline.toe_increment, "extra buffer updates per toe_every tasks"),
        FOML_UINT("baseline", "toe_every", baseline.toe_every, "tasks between buffer budget increments"),
        FOML_UINT("baseline", "replay_batch", baseline.replay_batch, "buffer minibatch size"),
        FOML_UINT("baseline", "ftml_inner_steps", baseline.ftml_inner_steps, "MAML inner steps"),
        FOML_DOUBLE("baseline", "ftml_inner_lr", baseline.ftml_inner_lr, "MAML inner and adaptation learning rate"),
        FOML_DOUBLE("baseline", "ftml_outer_lr", baseline.ftml_outer_lr, "MAML outer Adam learning rate"),
        FOML_DOUBLE("baseline", "ftml_support_fraction", baseline.ftml_support_fraction,
                    "share of a stored task used as support"),
        FOML_UINT("baseline", "ftml_support_batch", baseline.ftml_support_batch, "support samples per outer step"),
        FOML_UINT("baseline", "ftml_query_batch", baseline.ftml_query_batch, "query samples per outer step"),
    };
    for (auto& [k, f] : t)
      if (k == "checkpoint_every" || k == "max_steps") f.affects_results = false;
    return t;
  }();
  return table;
}

#undef FOML_DOUBLE
#undef FOML_UINT
#undef FOML_BOOL
#undef FOML_ENUM

const Field& field(const std::string& key) {
  for (const auto& [k, f] : fields())
    if (k == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  field(key).set(cfg, value);
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) { return field(key).get(cfg); }

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

std::string config_section(const std::string& key) { return field(key).section; }
std::string config_doc(const std::string& key) { return field(key).doc; }

void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& where) {
  std::istringstream is(text);
  std::string line, section;
  for (int lineno = 1; std::getline(is, line); ++lineno) {
    const std::string loc = where + ":" + std::to_string(lineno) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(loc + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(loc + "expected key=value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      const Field& f = field(key);
      if (!section.empty() && f.section != section)
        throw ConfigError("key '" + key + "' belongs in [" + f.section + "], not [" + section + "]");
      f.set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(loc + e.what());
    }
  }
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  ExperimentConfig cfg;
  apply_config_text(cfg, ss.str(), path.string());
  return cfg;
}

void apply_config_flags(ExperimentConfig& cfg, const std::vector<std::string>& flags) {
  for (const auto& flag : flags) {
    if (flag.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + flag + "'");
    const auto eq = flag.find('=');
    if (eq == std::string::npos) throw ConfigError("flag '" + flag + "' needs a value (--key=value)");
    set_config_value(cfg, flag.substr(2, eq - 2), flag.substr(eq + 1));
  }
}

namespace {

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + " " + what);
}

}  // namespace

void validate(const ExperimentConfig& c) {
  const auto& f = c.foml;
  const auto& b = c.baseline;
  require(f.alpha1 > 0.0, "alpha1", "must be positive");
  require(f.alpha2 > 0.0, "alpha2", "must be positive");
  require(f.beta1 >= 0.0, "beta1", "must be non-negative");
  require(f.beta2 >= 0.0, "beta2", "must be non-negative");
  require(f.K >= 1, "K", "must be at least 1");
  require(f.meta_batch >= 1, "meta_batch", "must be at least 1");
  require(f.train_fraction > 0.0 && f.train_fraction <= 1.0, "train_fraction", "must be in (0, 1]");
  require(c.N >= 1, "N", "must be at least 1");
  require(c.samples_per_task >= 1, "samples_per_task", "must be at least 1");
  require(c.num_tasks >= 1, "num_tasks", "must be at least 1");
  require(c.heldout_fraction >= 0.0 && c.heldout_fraction < 1.0, "heldout_fraction", "must be in [0, 1)");
  require(c.glyphs_per_class >= 1, "glyphs_per_class", "must be at least 1");
  require(c.hindsight_steps >= 1, "hindsight_steps", "must be at least 1");
  require(c.hindsight_lr > 0.0, "hindsight_lr", "must be positive");
  require(b.lr > 0.0, "lr", "must be positive");
  require(b.replay_batch >= 1, "replay_batch", "must be at least 1");
  require(b.ftml_inner_lr >= 0.0, "ftml_inner_lr", "must be non-negative");
  require(b.ftml_outer_lr > 0.0, "ftml_outer_lr", "must be positive");
  require(b.ftml_support_fraction > 0.0 && b.ftml_support_fraction < 1.0, "ftml_support_fraction", "must be in (0, 1)");
  require(b.ftml_support_batch >= 1, "ftml_support_batch", "must be at least 1");
  require(b.ftml_query_batch >= 1, "ftml_query_batch", "must be at least 1");
  require(c.output_dir.size() > 0, "output_dir", "must not be empty");
  if (needs_boundaries(c.learner) && !c.boundaries)
    throw ConfigError("learner " + to_string(c.learner) + " requires boundary signals, but the stream has boundaries=false");
  if (c.stream == StreamKind::Pair && c.arch != ArchKind::Siamese7)
    throw ConfigError("arch: the pair stream needs the siamese7 architecture");
  if (c.stream == StreamKind::Rainbow && c.arch == ArchKind::Siamese7)
    throw ConfigError("arch: siamese7 only works with the pair stream");
  if (!c.widths.empty()) {
    for (auto w : c.widths) require(w >= 1, "widths", "entries must be positive");
    if (c.arch == ArchKind::Convnet4) require(c.widths.size() == 4, "widths", "must list 4 filter counts for convnet4");
    if (c.arch == ArchKind::Siamese7) require(c.widths.size() == 7, "widths", "must list 7 filter counts for siamese7");
  }
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out, section;
  for (const auto& [k, f] : fields()) {
    if (f.section != section) {
      out += (section.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += k + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const std::string& s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, f] : fields()) {
    if (!f.affects_results || k == "output_dir") continue;
    mix(k);
    mix("=");
    mix(f.get(cfg));
    mix("\n");
  }
  return h;
}

Architecture make_architecture(const ExperimentConfig& cfg, const Shape& input_shape, std::size_t num_classes) {
  auto widths = cfg.widths.empty() ? Architecture::default_widths(cfg.arch) : cfg.widths;
  switch (cfg.arch) {
    case ArchKind::Mlp: return Architecture::mlp(std::move(widths), num_classes, input_shape);
    case ArchKind::Convnet4: return Architecture::convnet4(std::move(widths), num_classes, input_shape);
    case ArchKind::Siamese7: return Architecture::siamese7(std::move(widths), input_shape);
  }
  throw ConfigError("unknown architecture");
}

LearnerConfig learner_config(const ExperimentConfig& cfg, std::size_t steps_per_task) {
  LearnerConfig lc;
  lc.kind = cfg.learner;
  lc.foml = cfg.foml;
  lc.baseline = cfg.baseline;
  lc.baseline.steps_per_task = steps_per_task;
  return lc;
}

}  // namespace foml
