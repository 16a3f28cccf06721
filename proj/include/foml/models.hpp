#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "foml/params.hpp"
#include "foml/tape.hpp"

namespace foml {

enum class ArchKind { Mlp, Convnet4, Siamese7 };

std::string to_string(ArchKind kind);
ArchKind parse_arch_kind(const std::string& s);

struct Architecture {
  ArchKind kind = ArchKind::Mlp;
  // Hidden widths for mlp; filter counts for the conv nets.
  std::vector<std::size_t> widths{64};
  std::size_t num_classes = 10;
  Shape input_shape{3, 8, 8};  // channels, height, width
  std::size_t kernel = 3;

  static Architecture mlp(std::vector<std::size_t> hidden, std::size_t num_classes, Shape input_shape);
  static Architecture convnet4(std::vector<std::size_t> filters, std::size_t num_classes, Shape input_shape);
  static Architecture siamese7(std::vector<std::size_t> filters, Shape input_shape);

  static std::vector<std::size_t> default_widths(ArchKind kind);

  bool is_pair() const { return kind == ArchKind::Siamese7; }
  // Width of the logit row: num_classes, or 1 for the pair head.
  std::size_t output_width() const { return is_pair() ? 1 : num_classes; }
  void validate() const;
  std::string describe() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Inputs are [B, C, H, W]. Pair batches carry a second image per example and
// binary same/different labels.
struct LabeledBatch {
  Tensor inputs;
  std::optional<Tensor> pair_inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool is_pair() const { return pair_inputs.has_value(); }
};

void validate_batch(const Architecture& arch, const LabeledBatch& batch);

// Deterministic in (arch, seed): weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero.
ParameterVector init_params(const Architecture& arch, std::uint64_t seed);

// Logits [B, output_width] recorded on `tape`.
Var forward(Tape& tape, const Architecture& arch, std::span<const Var> params, const LabeledBatch& batch);
// Mean cross-entropy (binary for pairs) recorded on `tape`.
Var loss(Tape& tape, const Architecture& arch, std::span<const Var> params, const LabeledBatch& batch);

Tensor predict(const Architecture& arch, const ParameterVector& params, const LabeledBatch& batch);
double batch_loss(const Architecture& arch, const ParameterVector& params, const LabeledBatch& batch);

struct LossGrad {
  double loss = 0.0;
  ParameterVector grad;
};
LossGrad loss_and_grad(const Architecture& arch, const ParameterVector& params, const LabeledBatch& batch);

// Argmax of each logit row (ties go to the lower index); for the pair head,
// 1 when sigmoid(logit) > 0.5.
std::vector<int> predicted_labels(const Architecture& arch, const Tensor& logits);

}  // namespace foml
