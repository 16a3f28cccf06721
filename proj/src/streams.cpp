#include "foml/streams.hpp"

#include <algorithm>
#include <cmath>

#include "foml/error.hpp"

namespace foml {

std::array<double, 3> rainbow_color(int color_id) {
  static constexpr std::array<std::array<double, 3>, kRainbowColors> colors{{
      {1.0, 0.0, 0.0},
      {1.0, 0.5, 0.0},
      {1.0, 1.0, 0.0},
      {0.0, 0.8, 0.0},
      {0.0, 0.0, 1.0},
      {0.3, 0.0, 0.5},
      {0.6, 0.0, 0.9},
  }};
  if (color_id < 0 || color_id >= kRainbowColors) throw ContractError("color id out of range");
  return colors[static_cast<std::size_t>(color_id)];
}

std::vector<RainbowTransform> all_rainbow_transforms() {
  std::vector<RainbowTransform> out;
  for (int c = 0; c < kRainbowColors; ++c)
    for (int s = 0; s < kRainbowScales; ++s)
      for (int r = 0; r < kRainbowRotations; ++r) out.push_back({c, s, r});
  return out;
}

std::vector<double> apply_rainbow(std::span<const double> image, std::size_t height, std::size_t width,
                                  const RainbowTransform& t) {
  if (image.size() != height * width) throw ShapeError("rainbow transform expects a single-channel image");
  if (t.rotation_id != 0 && height != width) throw ShapeError("rotations need square images");
  std::vector<double> g(image.begin(), image.end());

  if (t.scale_id == 1) {
    std::vector<double> small(height * width, 0.0);
    const std::size_t h2 = height / 2, w2 = width / 2, oy = height / 4, ox = width / 4;
    for (std::size_t y = 0; y < h2; ++y)
      for (std::size_t x = 0; x < w2; ++x) {
        const double s = g[2 * y * width + 2 * x] + g[2 * y * width + 2 * x + 1] + g[(2 * y + 1) * width + 2 * x] +
                         g[(2 * y + 1) * width + 2 * x + 1];
        small[(y + oy) * width + x + ox] = 0.25 * s;
      }
    g = std::move(small);
  }

  for (int r = 0; r < t.rotation_id; ++r) {
    std::vector<double> rot(g.size());
    const std::size_t n = width;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) rot[y * n + x] = g[x * n + (n - 1 - y)];
    g = std::move(rot);
  }

  const auto bg = rainbow_color(t.color_id);
  std::vector<double> out(3 * height * width);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < g.size(); ++i) out[c * g.size() + i] = g[i] + (1.0 - g[i]) * bg[c];
  return out;
}

// ---------------------------------------------------------------------------

namespace {

LabeledBatch batch_from_rows(const Shape& item_shape, const std::vector<double>& rows, const std::vector<double>* pair_rows,
                             std::vector<int> labels) {
  Shape s{labels.size()};
  s.insert(s.end(), item_shape.begin(), item_shape.end());
  LabeledBatch b;
  b.inputs = Tensor(s, rows);
  if (pair_rows) b.pair_inputs = Tensor(s, *pair_rows);
  b.labels = std::move(labels);
  return b;
}

std::size_t heldout_count(std::size_t samples, double fraction) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(samples)));
}

void check_options(const StreamOptions& o, std::size_t samples_per_task) {
  if (o.batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(o.heldout_fraction >= 0.0 && o.heldout_fraction < 1.0)) throw ConfigError("heldout fraction must be in [0, 1)");
  const std::size_t held = heldout_count(samples_per_task, o.heldout_fraction);
  const std::size_t streamed = samples_per_task - held;
  if (streamed == 0 || streamed % o.batch_size != 0)
    throw ConfigError("streamed samples per task (" + std::to_string(streamed) + ") must be a positive multiple of the batch size (" +
                      std::to_string(o.batch_size) + ")");
}

}  // namespace

Stream::Stream(std::vector<Task> tasks, std::size_t batch_size) : tasks_(std::move(tasks)), batch_size_(batch_size) {
  if (tasks_.empty()) throw ConfigError("stream needs at least one task");
  if (batch_size_ == 0) throw ConfigError("batch size must be positive");
  const std::size_t n = tasks_.front().stream.size();
  if (n == 0 || n % batch_size_ != 0) throw ConfigError("task sample count must be a multiple of the batch size");
  for (const auto& t : tasks_)
    if (t.stream.size() != n) throw ConfigError("all tasks must have the same number of samples");
  steps_per_task_ = n / batch_size_;
}

std::optional<StreamBatch> Stream::next_batch() {
  if (position_ >= total_steps()) return std::nullopt;
  const std::size_t t = position_ / steps_per_task_, k = position_ % steps_per_task_;
  StreamBatch out;
  out.batch = slice(tasks_[t].stream, k * batch_size_, (k + 1) * batch_size_);
  out.step = position_;
  out.true_task = tasks_[t].descriptor;
  ++position_;
  return out;
}

void Stream::skip(std::size_t batches) { position_ = std::min(total_steps(), position_ + batches); }

Shape Stream::input_shape() const {
  const Shape& s = tasks_.front().stream.inputs.shape();
  return Shape(s.begin() + 1, s.end());
}

bool Stream::is_pair() const { return tasks_.front().stream.is_pair(); }

void Stream::relabel_tasks(std::span<const TaskDescriptor> descriptors) {
  if (descriptors.size() != tasks_.size()) throw ContractError("relabel needs one descriptor per task");
  for (std::size_t i = 0; i < tasks_.size(); ++i) tasks_[i].descriptor = descriptors[i];
}

Stream make_rainbow_stream(const Dataset& base, std::size_t samples_per_task, std::uint64_t seed, std::size_t num_tasks,
                           const StreamOptions& options) {
  if (base.channels != 1) throw ConfigError("rainbow stream needs a single-channel base dataset");
  if (num_tasks == 0) throw ConfigError("rainbow stream needs at least one task");
  if (samples_per_task > base.size())
    throw ConfigError("samples per task (" + std::to_string(samples_per_task) + ") exceeds the base dataset size (" +
                      std::to_string(base.size()) + ")");
  check_options(options, samples_per_task);

  Rng order_rng(derive_seed(seed, 0));
  std::vector<RainbowTransform> order;
  while (order.size() < num_tasks) {
    auto pass = all_rainbow_transforms();
    if (!options.fixed_order) order_rng.shuffle(pass);
    order.insert(order.end(), pass.begin(), pass.end());
  }
  order.resize(num_tasks);

  const std::size_t held = heldout_count(samples_per_task, options.heldout_fraction);
  const Shape item{3, base.height, base.width};
  std::vector<std::size_t> idx(base.size());
  std::vector<Stream::Task> tasks;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    Rng rng(derive_seed(seed, 1 + t));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    // Partial Fisher-Yates: the first samples_per_task entries are a uniform draw without replacement.
    for (std::size_t i = 0; i < samples_per_task; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    std::vector<double> rows;
    std::vector<int> labels;
    rows.reserve(samples_per_task * shape_size(item));
    for (std::size_t i = 0; i < samples_per_task; ++i) {
      const auto img = apply_rainbow(base.image(idx[i]), base.height, base.width, order[t]);
      rows.insert(rows.end(), img.begin(), img.end());
      labels.push_back(base.labels[idx[i]]);
    }
    const LabeledBatch all = batch_from_rows(item, rows, nullptr, std::move(labels));
    Stream::Task task;
    task.descriptor.task_index = t;
    task.descriptor.transform = order[t];
    task.stream = slice(all, 0, samples_per_task - held);
    if (held) task.heldout = slice(all, samples_per_task - held, samples_per_task);
    tasks.push_back(std::move(task));
  }
  return Stream(std::move(tasks), options.batch_size);
}

std::vector<std::vector<int>> pair_class_sets(std::size_t num_classes, std::size_t num_tasks, std::size_t classes_per_task,
                                              std::size_t carry_over, std::uint64_t seed) {
  if (num_tasks < 1) throw ConfigError("pair stream needs at least one task");
  if (classes_per_task < 2) throw ConfigError("pair stream needs at least 2 classes per task");
  if (carry_over >= classes_per_task) throw ConfigError("carry-over must be smaller than the classes per task");
  if (num_classes < classes_per_task) throw ConfigError("base dataset has fewer classes than classes per task");
  if (num_classes - classes_per_task < classes_per_task - carry_over)
    throw ConfigError("base dataset has too few classes to introduce new ones each task");
  Rng rng(seed);
  std::vector<std::vector<int>> sets;
  std::vector<int> all(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) all[c] = static_cast<int>(c);
  {
    auto pool = all;
    rng.shuffle(pool);
    pool.resize(classes_per_task);
    std::sort(pool.begin(), pool.end());
    sets.push_back(pool);
  }
  while (sets.size() < num_tasks) {
    const auto& prev = sets.back();
    auto carried = prev;
    rng.shuffle(carried);
    carried.resize(carry_over);
    std::vector<int> unused;
    for (int c : all)
      if (std::find(prev.begin(), prev.end(), c) == prev.end()) unused.push_back(c);
    rng.shuffle(unused);
    unused.resize(classes_per_task - carry_over);
    carried.insert(carried.end(), unused.begin(), unused.end());
    std::sort(carried.begin(), carried.end());
    sets.push_back(std::move(carried));
  }
  return sets;
}

LabeledBatch make_pair(const Dataset& base, std::size_t i, std::size_t j) {
  const Shape item{base.channels, base.height, base.width};
  const auto a = base.image(i), b = base.image(j);
  std::vector<double> ra(a.begin(), a.end()), rb(b.begin(), b.end());
  return batch_from_rows(item, ra, &rb, {base.labels[i] == base.labels[j] ? 1 : 0});
}

Stream make_pair_stream(const Dataset& base, std::size_t num_tasks, std::size_t samples_per_task, std::uint64_t seed,
                        std::size_t classes_per_task, std::size_t carry_over, const StreamOptions& options) {
  if (num_tasks < 1) throw ConfigError("pair stream needs at least one task");
  check_options(options, samples_per_task);
  const std::size_t num_classes = base.num_classes();
  if (num_classes < 5) throw ConfigError("pair stream needs a base dataset with at least 5 classes");
  const auto sets = pair_class_sets(num_classes, num_tasks, classes_per_task, carry_over, derive_seed(seed, 0));

  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < base.size(); ++i) by_class[static_cast<std::size_t>(base.labels[i])].push_back(i);
  for (const auto& set : sets)
    for (int c : set)
      if (by_class[static_cast<std::size_t>(c)].empty()) throw ConfigError("class " + std::to_string(c) + " has no items");

  const std::size_t held = heldout_count(samples_per_task, options.heldout_fraction);
  const Shape item{base.channels, base.height, base.width};
  std::vector<Stream::Task> tasks;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    Rng rng(derive_seed(seed, 1 + t));
    const auto& set = sets[t];
    std::vector<double> ra, rb;
    std::vector<int> labels;
    for (std::size_t s = 0; s < samples_per_task; ++s) {
      const bool same = rng.uniform() < 0.5;
      const std::size_t k1 = rng.below(set.size());
      std::size_t k2 = k1;
      if (!same) {
        k2 = rng.below(set.size() - 1);
        if (k2 >= k1) ++k2;
      }
      const auto& p1 = by_class[static_cast<std::size_t>(set[k1])];
      const auto& p2 = by_class[static_cast<std::size_t>(set[k2])];
      const std::size_t i = p1[rng.below(p1.size())], j = p2[rng.below(p2.size())];
      const auto a = base.image(i), b = base.image(j);
      ra.insert(ra.end(), a.begin(), a.end());
      rb.insert(rb.end(), b.begin(), b.end());
      labels.push_back(same ? 1 : 0);
    }
    const LabeledBatch all = batch_from_rows(item, ra, &rb, std::move(labels));
    Stream::Task task;
    task.descriptor.task_index = t;
    task.descriptor.class_set = set;
    task.stream = slice(all, 0, samples_per_task - held);
    if (held) task.heldout = slice(all, samples_per_task - held, samples_per_task);
    tasks.push_back(std::move(task));
  }
  return Stream(std::move(tasks), options.batch_size);
}

LabeledBatch slice(const LabeledBatch& batch, std::size_t begin, std::size_t end) {
  if (begin > end || end > batch.size()) throw ContractError("batch slice out of range");
  const Shape& s = batch.inputs.shape();
  const std::size_t item = batch.inputs.size() / std::max<std::size_t>(batch.size(), 1);
  Shape item_shape(s.begin() + 1, s.end());
  auto rows = [&](const Tensor& t) {
    const auto d = t.data();
    return std::vector<double>(d.begin() + static_cast<std::ptrdiff_t>(begin * item),
                               d.begin() + static_cast<std::ptrdiff_t>(end * item));
  };
  const auto a = rows(batch.inputs);
  std::vector<double> b;
  if (batch.is_pair()) b = rows(*batch.pair_inputs);
  return batch_from_rows(item_shape, a, batch.is_pair() ? &b : nullptr,
                         std::vector<int>(batch.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                                          batch.labels.begin() + static_cast<std::ptrdiff_t>(end)));
}

LabeledBatch concat(std::span<const LabeledBatch> parts) {
  if (parts.empty()) throw ContractError("concat of no batches");
  const Shape& s = parts.front().inputs.shape();
  const Shape item_shape(s.begin() + 1, s.end());
  const bool pair = parts.front().is_pair();
  std::vector<double> a, b;
  std::vector<int> labels;
  for (const auto& p : parts) {
    const Shape& ps = p.inputs.shape();
    if (Shape(ps.begin() + 1, ps.end()) != item_shape || p.is_pair() != pair) throw ShapeError("concat of mismatched batches");
    a.insert(a.end(), p.inputs.data().begin(), p.inputs.data().end());
    if (pair) b.insert(b.end(), p.pair_inputs->data().begin(), p.pair_inputs->data().end());
    labels.insert(labels.end(), p.labels.begin(), p.labels.end());
  }
  return batch_from_rows(item_shape, a, pair ? &b : nullptr, std::move(labels));
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::uint64_t seed, std::size_t max_entries) : rng_(seed), max_entries_(max_entries) {}

void ReplayBuffer::append(const LabeledBatch& batch) {
  if (batch.size() == 0) return;
  const Shape& s = batch.inputs.shape();
  const Shape item(s.begin() + 1, s.end());
  if (labels_.empty() && inputs_.empty()) {
    item_shape_ = item;
    pair_ = batch.is_pair();
  } else if (item != item_shape_ || batch.is_pair() != pair_) {
    throw ShapeError("buffer append: batch of shape " + shape_string(s) + " does not match stored items " +
                     shape_string(item_shape_));
  }
  inputs_.insert(inputs_.end(), batch.inputs.data().begin(), batch.inputs.data().end());
  if (pair_) pair_inputs_.insert(pair_inputs_.end(), batch.pair_inputs->data().begin(), batch.pair_inputs->data().end());
  labels_.insert(labels_.end(), batch.labels.begin(), batch.labels.end());
  if (max_entries_ && labels_.size() > max_entries_) {
    const std::size_t drop = labels_.size() - max_entries_;
    inputs_.erase(inputs_.begin(), inputs_.begin() + static_cast<std::ptrdiff_t>(drop * item_size()));
    if (pair_) pair_inputs_.erase(pair_inputs_.begin(), pair_inputs_.begin() + static_cast<std::ptrdiff_t>(drop * item_size()));
    labels_.erase(labels_.begin(), labels_.begin() + static_cast<std::ptrdiff_t>(drop));
  }
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, std::size_t exclude_newest) {
  if (empty()) throw ContractError("cannot sample from an empty buffer");
  const std::size_t pool = size() > exclude_newest ? size() - exclude_newest : size();
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng_.below(pool));
  return idx;
}

LabeledBatch ReplayBuffer::sample_random(std::size_t n, std::size_t exclude_newest) {
  const auto idx = sample_indices(n, exclude_newest);
  return gather(idx);
}

LabeledBatch ReplayBuffer::gather(std::span<const std::size_t> indices) const {
  const std::size_t item = item_size();
  std::vector<double> a, b;
  std::vector<int> labels;
  a.reserve(indices.size() * item);
  for (std::size_t i : indices) {
    if (i >= size()) throw ContractError("buffer index out of range");
    a.insert(a.end(), inputs_.begin() + static_cast<std::ptrdiff_t>(i * item),
             inputs_.begin() + static_cast<std::ptrdiff_t>((i + 1) * item));
    if (pair_)
      b.insert(b.end(), pair_inputs_.begin() + static_cast<std::ptrdiff_t>(i * item),
               pair_inputs_.begin() + static_cast<std::ptrdiff_t>((i + 1) * item));
    labels.push_back(labels_[i]);
  }
  return batch_from_rows(item_shape_, a, pair_ ? &b : nullptr, std::move(labels));
}

LabeledBatch ReplayBuffer::all() const {
  std::vector<std::size_t> idx(size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return gather(idx);
}

void ReplayBuffer::restore(Shape item_shape, bool pair, std::vector<double> inputs, std::vector<double> pair_inputs,
                           std::vector<int> labels) {
  const std::size_t item = shape_size(item_shape);
  if (inputs.size() != labels.size() * item || (pair && pair_inputs.size() != inputs.size()))
    throw FormatError("buffer contents do not match their item shape");
  item_shape_ = std::move(item_shape);
  pair_ = pair;
  inputs_ = std::move(inputs);
  pair_inputs_ = std::move(pair_inputs);
  labels_ = std::move(labels);
}

}  // namespace foml
