#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "foml/config.hpp"
#include "foml/dataset.hpp"
#include "foml/error.hpp"
#include "foml/eval.hpp"
#include "foml/experiment.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfigError = 2, kNumericFailure = 3 };

foml::ExperimentConfig gather_config(const std::string& file, const std::vector<std::string>& flags) {
  foml::ExperimentConfig cfg = file.empty() ? foml::default_config() : foml::load_config_file(file);
  foml::apply_config_flags(cfg, flags);
  foml::validate(cfg);
  return cfg;
}

void summarize(const std::string& label, const foml::RunResult& r) {
  if (r.metrics.per_task.empty()) {
    std::printf("%s: %zu steps, no task completed\n", label.c_str(), r.steps);
    return;
  }
  std::printf("%s: %zu steps, %zu tasks, first-10 error %.4f, last-10 error %.4f\n", label.c_str(), r.steps,
              r.metrics.per_task.size(), foml::first_tasks_error(r.metrics, 10), foml::last_tasks_error(r.metrics, 10));
  if (!r.metrics.regret_series.empty()) std::printf("%s: regret %.6f\n", label.c_str(), r.metrics.regret_series.back());
}

int sweep(foml::ExperimentConfig base, const std::string& kind) {
  struct Variant {
    std::string name;
    std::vector<std::string> flags;
  };
  std::vector<Variant> variants;
  if (kind == "K") {
    for (int k : {1, 2, 3, 5, 10}) variants.push_back({"K" + std::to_string(k), {"--K=" + std::to_string(k)}});
  } else if (kind == "beta") {
    variants = {{"full", {}},
                {"beta2_0", {"--beta2=0"}},
                {"beta1_0", {"--beta1=0", "--beta2=0"}},
                {"no_meta", {"--meta_updates=false"}}};
  } else {
    throw foml::ConfigError("unknown sweep '" + kind + "' (expected K or beta)");
  }
  base.learner = foml::LearnerKind::Foml;
  const std::string root = base.output_dir;
  for (const auto& v : variants) {
    foml::ExperimentConfig cfg = base;
    foml::apply_config_flags(cfg, v.flags);
    cfg.output_dir = root + "/" + v.name;
    foml::validate(cfg);
    summarize(v.name, foml::run_experiment(cfg));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fully online meta-learning experiments"};
  app.require_subcommand(1);

  std::string config_file;
  auto* run = app.add_subcommand("run", "run one experiment; any --key=value overrides a config setting");
  run->add_option("-c,--config", config_file, "config file (key = value, optional [sections])");
  run->allow_extras();

  std::string checkpoint;
  auto* resume = app.add_subcommand("resume", "continue a run from a checkpoint");
  resume->add_option("-c,--config", config_file, "config file the checkpointed run used");
  resume->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  resume->allow_extras();

  std::string images, labels, out;
  std::size_t side = 0;
  auto* convert = app.add_subcommand("convert-dataset", "convert IDX image and label files to FOMLDS v1");
  convert->add_option("--images", images, "idx3 image file")->required();
  convert->add_option("--labels", labels, "idx1 label file")->required();
  convert->add_option("--out", out, "output file; .csv selects the CSV body")->required();
  convert->add_option("--resize", side, "resample to this side length by area averaging");

  std::string sweep_kind = "K";
  auto* sw = app.add_subcommand("sweep", "sequential FOML runs over K or the beta/meta-update ablations");
  sw->add_option("-c,--config", config_file, "base config file");
  sw->add_option("--sweep", sweep_kind, "K or beta");
  sw->allow_extras();

  auto* show = app.add_subcommand("config", "print every setting with its default and description");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      const auto cfg = gather_config(config_file, run->remaining());
      summarize(foml::to_string(cfg.learner), foml::run_experiment(cfg));
    } else if (*resume) {
      const auto cfg = gather_config(config_file, resume->remaining());
      summarize(foml::to_string(cfg.learner), foml::resume_experiment(cfg, checkpoint));
    } else if (*convert) {
      const auto data = foml::read_idx(images, labels, side);
      foml::save_dataset(data, out);
      std::printf("wrote %zu items of %zux%zu to %s\n", data.size(), data.height, data.width, out.c_str());
    } else if (*sw) {
      return sweep(gather_config(config_file, sw->remaining()), sweep_kind);
    } else if (*show) {
      const auto cfg = foml::default_config();
      std::string section;
      for (const auto& key : foml::config_keys()) {
        if (foml::config_section(key) != section) {
          section = foml::config_section(key);
          std::printf("%s[%s]\n", key == foml::config_keys().front() ? "" : "\n", section.c_str());
        }
        std::printf("%s = %s  # %s\n", key.c_str(), foml::get_config_value(cfg, key).c_str(),
                    foml::config_doc(key).c_str());
      }
    }
  } catch (const foml::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const foml::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumericFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kOk;
}
