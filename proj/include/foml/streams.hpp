#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "foml/dataset.hpp"
#include "foml/models.hpp"
#include "foml/rng.hpp"

namespace foml {

struct RainbowTransform {
  int color_id = 0;     // 0..6, red through violet
  int scale_id = 0;     // 0 full, 1 half
  int rotation_id = 0;  // quarter turns counter-clockwise

  friend bool operator==(const RainbowTransform&, const RainbowTransform&) = default;
};

constexpr int kRainbowColors = 7;
constexpr int kRainbowScales = 2;
constexpr int kRainbowRotations = 4;
constexpr std::size_t kRainbowTasks = kRainbowColors * kRainbowScales * kRainbowRotations;

std::array<double, 3> rainbow_color(int color_id);
std::vector<RainbowTransform> all_rainbow_transforms();
// One single-channel HxW image to 3xHxW. The digit is drawn white over the
// background color: out_c = p + (1 - p) * bg_c.
std::vector<double> apply_rainbow(std::span<const double> image, std::size_t height, std::size_t width,
                                  const RainbowTransform& t);

// Evaluation-side ground truth about which task a batch came from.
struct TaskDescriptor {
  std::size_t task_index = 0;
  std::optional<RainbowTransform> transform;
  std::vector<int> class_set;

  friend bool operator==(const TaskDescriptor&, const TaskDescriptor&) = default;
};

struct StreamBatch {
  LabeledBatch batch;
  std::size_t step = 0;
  TaskDescriptor true_task;
};

struct StreamOptions {
  std::size_t batch_size = 10;
  double heldout_fraction = 0.2;
  // Rainbow only: keep the enumeration order instead of shuffling.
  bool fixed_order = false;
};

// A finite, fully materialized task sequence. Each task's samples are split
// into a stream part (delivered batch by batch) and a heldout part used only
// for evaluation.
class Stream {
 public:
  struct Task {
    TaskDescriptor descriptor;
    LabeledBatch stream;
    LabeledBatch heldout;
  };

  Stream(std::vector<Task> tasks, std::size_t batch_size);

  // Empty once every task has been delivered.
  std::optional<StreamBatch> next_batch();
  // Advance without materializing batches.
  void skip(std::size_t batches);

  std::size_t position() const { return position_; }
  std::size_t num_tasks() const { return tasks_.size(); }
  std::size_t batch_size() const { return batch_size_; }
  std::size_t steps_per_task() const { return steps_per_task_; }
  std::size_t total_steps() const { return steps_per_task_ * tasks_.size(); }
  const Task& task(std::size_t i) const { return tasks_.at(i); }
  Shape input_shape() const;
  bool is_pair() const;

  // Replace the hidden descriptors, leaving every datapoint in place.
  void relabel_tasks(std::span<const TaskDescriptor> descriptors);

 private:
  std::vector<Task> tasks_;
  std::size_t batch_size_;
  std::size_t steps_per_task_;
  std::size_t position_ = 0;
};

// Runs of 56 transforms, each run a fresh permutation (or the enumeration
// order when fixed_order is set).
Stream make_rainbow_stream(const Dataset& base, std::size_t samples_per_task, std::uint64_t seed,
                           std::size_t num_tasks = kRainbowTasks, const StreamOptions& options = {});

// Same/different pairs over a sliding window of classes.
Stream make_pair_stream(const Dataset& base, std::size_t num_tasks, std::size_t samples_per_task, std::uint64_t seed,
                        std::size_t classes_per_task = 5, std::size_t carry_over = 2,
                        const StreamOptions& options = {});

std::vector<std::vector<int>> pair_class_sets(std::size_t num_classes, std::size_t num_tasks, std::size_t classes_per_task,
                                              std::size_t carry_over, std::uint64_t seed);

// Single pair example from two items of `base`; label 1 means same class.
LabeledBatch make_pair(const Dataset& base, std::size_t i, std::size_t j);

// Rows [begin, end) of a batch.
LabeledBatch slice(const LabeledBatch& batch, std::size_t begin, std::size_t end);
LabeledBatch concat(std::span<const LabeledBatch> parts);

// Append-only store of seen examples, sampled uniformly with replacement.
class ReplayBuffer {
 public:
  // max_entries == 0 keeps everything; otherwise the oldest entries are dropped.
  explicit ReplayBuffer(std::uint64_t seed = 0, std::size_t max_entries = 0);

  void append(const LabeledBatch& batch);
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  // n draws with replacement. `exclude_newest` leaves out the most recently
  // appended entries when enough older ones exist.
  LabeledBatch sample_random(std::size_t n, std::size_t exclude_newest = 0);
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t exclude_newest = 0);
  LabeledBatch gather(std::span<const std::size_t> indices) const;
  LabeledBatch all() const;

  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }

  Shape item_shape() const { return item_shape_; }
  bool is_pair() const { return pair_; }
  std::size_t max_entries() const { return max_entries_; }
  std::span<const double> raw_inputs() const { return inputs_; }
  std::span<const double> raw_pair_inputs() const { return pair_inputs_; }
  std::span<const int> raw_labels() const { return labels_; }
  // Rebuild from serialized contents.
  void restore(Shape item_shape, bool pair, std::vector<double> inputs, std::vector<double> pair_inputs,
               std::vector<int> labels);

  friend bool operator==(const ReplayBuffer&, const ReplayBuffer&) = default;

 private:
  std::size_t item_size() const { return shape_size(item_shape_); }

  Rng rng_;
  std::size_t max_entries_;
  Shape item_shape_;
  bool pair_ = false;
  std::vector<double> inputs_;
  std::vector<double> pair_inputs_;
  std::vector<int> labels_;
};

}  // namespace foml
