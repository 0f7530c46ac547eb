#pragma once

// Minimal differentiable network core: gated recurrent cells and dense nets
// over a flat parameter vector, with hand-written backpropagation.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mmfl::nn {

enum class CellKind {
  gated_recurrent,  ///< update/reset/candidate cell over a sequence
  dense,            ///< feed-forward, single-row input
};

std::string to_string(CellKind kind);
CellKind cell_kind_from_string(const std::string& name);

struct ModelSpec {
  std::string model_id;
  std::size_t input_dim = 1;
  CellKind cell = CellKind::gated_recurrent;
  /// Recurrent cells need >= 1. A dense net with 0 maps input straight to output.
  std::size_t hidden_dim = 1;
  std::size_t output_dim = 1;

  /// Throws InputError on an invalid combination of fields.
  void validate() const;

  /// Equal in every field except model_id.
  bool structurally_equal(const ModelSpec& other) const noexcept;

  bool operator==(const ModelSpec&) const = default;
};

struct TensorShape {
  std::string name;
  std::vector<std::size_t> dims;

  std::size_t size() const noexcept;
};

/// Ordered tensor layout of the flat parameter vector.
std::vector<TensorShape> shape_map(const ModelSpec& spec);

std::size_t param_count(const ModelSpec& spec);

struct ModelWeights {
  ModelSpec spec;
  std::vector<double> params;

  std::size_t size() const noexcept { return params.size(); }
  std::vector<TensorShape> shapes() const { return shape_map(spec); }

  /// Zero-valued weights with the layout of `spec`.
  static ModelWeights zeros(const ModelSpec& spec);
};

/// Time-major sequence: one row per step, one column per feature.
using Sequence = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LabeledBatch {
  std::vector<Sequence> inputs;
  std::vector<int> labels;

  std::size_t size() const noexcept { return inputs.size(); }
  bool empty() const noexcept { return inputs.empty(); }
  /// Throws InputError if lengths differ or a label is not 0/1.
  void validate() const;
};

inline constexpr double kInitRange = 0.1;
inline constexpr double kProbabilityClamp = 1e-7;

/// Uniform(-scale*0.1, scale*0.1) draw for every parameter.
ModelWeights init_model(const ModelSpec& spec, std::mt19937_64& rng, double scale = 1.0);

/// Raw output-layer activations (pre-sigmoid / pre-softmax).
Eigen::VectorXd logits(const ModelWeights& weights, const Sequence& input);

/// Sigmoid of the first output after the last step.
double forward(const ModelWeights& weights, const Sequence& input);

/// forward() over many inputs; recurrent inputs of equal length are stacked
/// and evaluated together.
std::vector<double> forward_batch(const ModelWeights& weights, std::span<const Sequence> inputs);

/// Per-step sigmoid outputs of a recurrent model (one per row of `input`).
/// Dense models return a single value.
std::vector<double> step_probabilities(const ModelWeights& weights, const Sequence& input);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
Eigen::VectorXd softmax_head(const ModelWeights& weights, const Sequence& input);

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7].
double loss(const ModelWeights& weights, const LabeledBatch& batch);

/// Adds d(objective)/d(params) to `grad`, given d(objective)/d(logits) for one input.
void accumulate_gradient(const ModelWeights& weights, const Sequence& input,
                         std::span<const double> dlogits, std::span<double> grad);

/// Analytic gradient of `loss` by backpropagation through time.
std::vector<double> loss_gradient(const ModelWeights& weights, const LabeledBatch& batch);

/// params - lr * grad, after checking every entry of grad is finite.
/// Throws NumericError naming the offending tensor.
ModelWeights apply_gradient(const ModelWeights& weights, std::span<const double> grad, double lr);

ModelWeights gd_step(const ModelWeights& weights, const LabeledBatch& batch, double lr);

/// `iterations` sequential full-batch gradient steps.
ModelWeights train_local(ModelWeights weights, const LabeledBatch& batch, double lr,
                         std::size_t iterations);

// Debug export: a shape-map header followed by one value per line.
void write_weights(std::ostream& out, const ModelWeights& weights);
ModelWeights read_weights(std::istream& in);

}  // namespace mmfl::nn
