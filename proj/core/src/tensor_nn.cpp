#include "mmfl/tensor_nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mmfl/error.hpp"

namespace mmfl::nn {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const MatRM>;
using MatMap = Eigen::Map<MatRM>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& x) { return 1.0 / (1.0 + (-x).exp()); }

// Offsets into the flat vector for each layout; mirrors shape_map order.
struct RecurrentLayout {
  std::size_t in, hid, out;
  std::size_t w, u, b, w_out, b_out, total;

  explicit RecurrentLayout(const ModelSpec& s)
      : in(s.input_dim), hid(s.hidden_dim), out(s.output_dim) {
    w = 0;
    u = w + 3 * hid * in;
    b = u + 3 * hid * hid;
    w_out = b + 3 * hid;
    b_out = w_out + out * hid;
    total = b_out + out;
  }
};

struct DenseLayout {
  std::size_t in, hid, out;
  std::size_t w_hidden, b_hidden, w_out, b_out, total;

  explicit DenseLayout(const ModelSpec& s)
      : in(s.input_dim), hid(s.hidden_dim), out(s.output_dim) {
    w_hidden = 0;
    b_hidden = w_hidden + hid * in;
    w_out = b_hidden + hid;
    const std::size_t fan_in = hid == 0 ? in : hid;
    b_out = w_out + out * fan_in;
    total = b_out + out;
  }
};

void check_input(const ModelSpec& spec, const Sequence& input) {
  if (input.rows() == 0) {
    throw InputError("model '" + spec.model_id + "': empty input sequence");
  }
  if (static_cast<std::size_t>(input.cols()) != spec.input_dim) {
    throw InputError("model '" + spec.model_id + "': expected " + std::to_string(spec.input_dim) +
                     " features, got " + std::to_string(input.cols()));
  }
  if (spec.cell == CellKind::dense && input.rows() != 1) {
    throw InputError("model '" + spec.model_id + "': dense model takes a single row, got " +
                     std::to_string(input.rows()));
  }
}

void check_params(const ModelWeights& w) {
  if (w.params.size() != param_count(w.spec)) {
    throw InputError("model '" + w.spec.model_id + "': parameter vector has " +
                     std::to_string(w.params.size()) + " entries, layout needs " +
                     std::to_string(param_count(w.spec)));
  }
}

// Hidden trajectory of a recurrent cell, kept for backpropagation.
struct RecurrentTrace {
  MatRM h;  // (T+1) x hid, row 0 is the initial zero state
  MatRM z, r, c;
};

RecurrentTrace run_recurrent(const ModelWeights& weights, const Sequence& x) {
  const RecurrentLayout L(weights.spec);
  const double* p = weights.params.data();
  const auto T = x.rows();
  const auto H = static_cast<Eigen::Index>(L.hid);
  ConstMatMap W(p + L.w, 3 * H, static_cast<Eigen::Index>(L.in));
  ConstMatMap U(p + L.u, 3 * H, H);
  ConstVecMap b(p + L.b, 3 * H);

  MatRM xa = x * W.transpose();
  xa.rowwise() += b.transpose();

  RecurrentTrace tr;
  tr.h = MatRM::Zero(T + 1, H);
  tr.z.resize(T, H);
  tr.r.resize(T, H);
  tr.c.resize(T, H);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::VectorXd h_prev = tr.h.row(t).transpose();
    const Eigen::VectorXd a_zr = xa.row(t).head(2 * H).transpose() + U.topRows(2 * H) * h_prev;
    const Eigen::ArrayXd z = sigmoid(a_zr.head(H).array());
    const Eigen::ArrayXd r = sigmoid(a_zr.tail(H).array());
    const Eigen::VectorXd rh = (r * h_prev.array()).matrix();
    const Eigen::ArrayXd c =
        (xa.row(t).tail(H).transpose() + U.bottomRows(H) * rh).array().tanh();
    tr.z.row(t) = z.matrix().transpose();
    tr.r.row(t) = r.matrix().transpose();
    tr.c.row(t) = c.matrix().transpose();
    tr.h.row(t + 1) = ((1.0 - z) * h_prev.array() + z * c).matrix().transpose();
  }
  return tr;
}

Eigen::VectorXd head_logits(const ModelWeights& weights, std::size_t w_out, std::size_t b_out,
                            std::size_t fan_in, const Eigen::VectorXd& features) {
  const double* p = weights.params.data();
  const auto out = static_cast<Eigen::Index>(weights.spec.output_dim);
  ConstMatMap Wo(p + w_out, out, static_cast<Eigen::Index>(fan_in));
  ConstVecMap bo(p + b_out, out);
  return Wo * features + bo;
}

Eigen::VectorXd dense_hidden(const ModelWeights& weights, const DenseLayout& L,
                             const Eigen::VectorXd& x) {
  if (L.hid == 0) return x;
  const double* p = weights.params.data();
  ConstMatMap Wh(p + L.w_hidden, static_cast<Eigen::Index>(L.hid),
                 static_cast<Eigen::Index>(L.in));
  ConstVecMap bh(p + L.b_hidden, static_cast<Eigen::Index>(L.hid));
  return (Wh * x + bh).array().tanh().matrix();
}

// Gradient of clamped BCE with respect to the sigmoid logit.
double bce_logit_grad(double p, int label) {
  if (p < kProbabilityClamp || p > 1.0 - kProbabilityClamp) return 0.0;
  return p - static_cast<double>(label);
}

double bce(double p, int label) {
  const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return label == 1 ? -std::log(q) : -std::log(1.0 - q);
}

// Recurrent pass over B equal-length sequences; x[t] is B x in.
struct BatchTrace {
  std::vector<MatRM> h;  // T+1 entries of B x hid, h[0] zero
  std::vector<MatRM> z, r, c;
};

std::vector<MatRM> stack_steps(std::span<const Sequence> inputs, std::span<const std::size_t> idx) {
  const auto T = inputs[idx[0]].rows();
  const auto in = inputs[idx[0]].cols();
  const auto B = static_cast<Eigen::Index>(idx.size());
  std::vector<MatRM> x(static_cast<std::size_t>(T), MatRM(B, in));
  for (Eigen::Index i = 0; i < B; ++i) {
    const Sequence& s = inputs[idx[static_cast<std::size_t>(i)]];
    for (Eigen::Index t = 0; t < T; ++t) x[static_cast<std::size_t>(t)].row(i) = s.row(t);
  }
  return x;
}

BatchTrace run_recurrent_batch(const ModelWeights& weights, const std::vector<MatRM>& x) {
  const RecurrentLayout L(weights.spec);
  const double* p = weights.params.data();
  const auto H = static_cast<Eigen::Index>(L.hid);
  const auto B = x.front().rows();
  ConstMatMap W(p + L.w, 3 * H, static_cast<Eigen::Index>(L.in));
  ConstMatMap U(p + L.u, 3 * H, H);
  ConstVecMap b(p + L.b, 3 * H);

  BatchTrace tr;
  tr.h.push_back(MatRM::Zero(B, H));
  for (const auto& xt : x) {
    const MatRM& hp = tr.h.back();
    MatRM a = xt * W.transpose();
    a.rowwise() += b.transpose();
    a.leftCols(2 * H).noalias() += hp * U.topRows(2 * H).transpose();
    MatRM z = (1.0 + (-a.leftCols(H).array()).exp()).inverse().matrix();
    MatRM r = (1.0 + (-a.middleCols(H, H).array()).exp()).inverse().matrix();
    const MatRM rh = (r.array() * hp.array()).matrix();
    a.rightCols(H).noalias() += rh * U.bottomRows(H).transpose();
    MatRM c = a.rightCols(H).array().tanh().matrix();
    tr.h.push_back(((1.0 - z.array()) * hp.array() + z.array() * c.array()).matrix());
    tr.z.push_back(std::move(z));
    tr.r.push_back(std::move(r));
    tr.c.push_back(std::move(c));
  }
  return tr;
}

// Final-step sigmoid output of every row.
Eigen::VectorXd batch_head(const ModelWeights& weights, const MatRM& h_last) {
  const RecurrentLayout L(weights.spec);
  const double* p = weights.params.data();
  ConstVecMap wo(p + L.w_out, static_cast<Eigen::Index>(L.hid));
  const Eigen::VectorXd logit = (h_last * wo).array() + p[L.b_out];
  return (1.0 + (-logit.array()).exp()).inverse().matrix();
}

// Indices grouped by sequence length, in first-seen order.
std::vector<std::vector<std::size_t>> length_groups(std::span<const Sequence> inputs) {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<Eigen::Index> lengths;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto it = std::find(lengths.begin(), lengths.end(), inputs[i].rows());
    if (it == lengths.end()) {
      lengths.push_back(inputs[i].rows());
      groups.push_back({i});
    } else {
      groups[static_cast<std::size_t>(it - lengths.begin())].push_back(i);
    }
  }
  return groups;
}

// Adds the BPTT gradient for one stacked group; dlogit is B x 1 (first output).
void accumulate_batch_gradient(const ModelWeights& weights, const std::vector<MatRM>& x,
                               const BatchTrace& tr, const Eigen::VectorXd& dlogit, double* g) {
  const RecurrentLayout L(weights.spec);
  const double* p = weights.params.data();
  const auto H = static_cast<Eigen::Index>(L.hid);
  const auto T = static_cast<Eigen::Index>(x.size());
  ConstMatMap U(p + L.u, 3 * H, H);
  ConstVecMap wo(p + L.w_out, H);

  VecMap(g + L.w_out, H).noalias() += tr.h.back().transpose() * dlogit;
  g[L.b_out] += dlogit.sum();

  MatMap gW(g + L.w, 3 * H, static_cast<Eigen::Index>(L.in));
  MatMap gU(g + L.u, 3 * H, H);
  VecMap gb(g + L.b, 3 * H);
  MatRM dh = dlogit * wo.transpose();
  MatRM da(x.front().rows(), 3 * H);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const auto k = static_cast<std::size_t>(t);
    const auto hp = tr.h[k].array();
    const auto z = tr.z[k].array();
    const auto r = tr.r[k].array();
    const auto c = tr.c[k].array();
    da.rightCols(H) = (dh.array() * z * (1.0 - c.square())).matrix();
    da.leftCols(H) = (dh.array() * (c - hp) * z * (1.0 - z)).matrix();
    const MatRM d_rh = da.rightCols(H) * U.bottomRows(H);
    da.middleCols(H, H) = (d_rh.array() * hp * r * (1.0 - r)).matrix();

    gU.topRows(2 * H).noalias() += da.leftCols(2 * H).transpose() * tr.h[k];
    gU.bottomRows(H).noalias() += da.rightCols(H).transpose() * (r * hp).matrix();
    gW.noalias() += da.transpose() * x[k];
    gb += da.colwise().sum().transpose();

    dh = (dh.array() * (1.0 - z) + d_rh.array() * r).matrix();
    dh.noalias() += da.leftCols(2 * H) * U.topRows(2 * H);
  }
}

}  // namespace

std::string to_string(CellKind kind) {
  return kind == CellKind::gated_recurrent ? "gru" : "dense";
}

CellKind cell_kind_from_string(const std::string& name) {
  if (name == "gru" || name == "gated_recurrent") return CellKind::gated_recurrent;
  if (name == "dense") return CellKind::dense;
  throw InputError("unknown cell kind '" + name + "'");
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw InputError("model '" + model_id + "': input_dim must be >= 1");
  if (output_dim == 0) throw InputError("model '" + model_id + "': output_dim must be >= 1");
  if (cell == CellKind::gated_recurrent && hidden_dim == 0) {
    throw InputError("model '" + model_id + "': recurrent hidden_dim must be >= 1");
  }
}

bool ModelSpec::structurally_equal(const ModelSpec& other) const noexcept {
  return input_dim == other.input_dim && cell == other.cell && hidden_dim == other.hidden_dim &&
         output_dim == other.output_dim;
}

std::size_t TensorShape::size() const noexcept {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<TensorShape> shape_map(const ModelSpec& s) {
  const auto in = s.input_dim, hid = s.hidden_dim, out = s.output_dim;
  if (s.cell == CellKind::gated_recurrent) {
    return {
        {"W_z", {hid, in}}, {"W_r", {hid, in}}, {"W_c", {hid, in}},
        {"U_z", {hid, hid}}, {"U_r", {hid, hid}}, {"U_c", {hid, hid}},
        {"b_z", {hid}},     {"b_r", {hid}},     {"b_c", {hid}},
        {"W_out", {out, hid}}, {"b_out", {out}},
    };
  }
  if (hid == 0) return {{"W_out", {out, in}}, {"b_out", {out}}};
  return {{"W_hidden", {hid, in}}, {"b_hidden", {hid}}, {"W_out", {out, hid}}, {"b_out", {out}}};
}

std::size_t param_count(const ModelSpec& spec) {
  std::size_t n = 0;
  for (const auto& t : shape_map(spec)) n += t.size();
  return n;
}

ModelWeights ModelWeights::zeros(const ModelSpec& spec) {
  spec.validate();
  return ModelWeights{spec, std::vector<double>(param_count(spec), 0.0)};
}

void LabeledBatch::validate() const {
  if (inputs.size() != labels.size()) {
    throw InputError("batch has " + std::to_string(inputs.size()) + " inputs but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw InputError("batch label " + std::to_string(i) + " is not binary");
    }
  }
}

ModelWeights init_model(const ModelSpec& spec, std::mt19937_64& rng, double scale) {
  ModelWeights w = ModelWeights::zeros(spec);
  std::uniform_real_distribution<double> dist(-kInitRange * scale, kInitRange * scale);
  for (auto& v : w.params) v = dist(rng);
  return w;
}

Eigen::VectorXd logits(const ModelWeights& weights, const Sequence& input) {
  check_params(weights);
  check_input(weights.spec, input);
  if (weights.spec.cell == CellKind::gated_recurrent) {
    const RecurrentLayout L(weights.spec);
    const RecurrentTrace tr = run_recurrent(weights, input);
    return head_logits(weights, L.w_out, L.b_out, L.hid,
                       tr.h.row(tr.h.rows() - 1).transpose());
  }
  const DenseLayout L(weights.spec);
  const Eigen::VectorXd x = input.row(0).transpose();
  return head_logits(weights, L.w_out, L.b_out, L.hid == 0 ? L.in : L.hid,
                     dense_hidden(weights, L, x));
}

double forward(const ModelWeights& weights, const Sequence& input) {
  return sigmoid(logits(weights, input)(0));
}

std::vector<double> forward_batch(const ModelWeights& weights, std::span<const Sequence> inputs) {
  std::vector<double> out(inputs.size());
  if (weights.spec.cell != CellKind::gated_recurrent) {
    for (std::size_t i = 0; i < inputs.size(); ++i) out[i] = forward(weights, inputs[i]);
    return out;
  }
  check_params(weights);
  for (const auto& s : inputs) check_input(weights.spec, s);
  for (const auto& idx : length_groups(inputs)) {
    const auto x = stack_steps(inputs, idx);
    const auto tr = run_recurrent_batch(weights, x);
    const Eigen::VectorXd prob = batch_head(weights, tr.h.back());
    for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = prob(static_cast<Eigen::Index>(i));
  }
  return out;
}

std::vector<double> step_probabilities(const ModelWeights& weights, const Sequence& input) {
  check_params(weights);
  check_input(weights.spec, input);
  if (weights.spec.cell == CellKind::dense) return {forward(weights, input)};
  const RecurrentLayout L(weights.spec);
  const RecurrentTrace tr = run_recurrent(weights, input);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(input.rows()));
  for (Eigen::Index t = 1; t < tr.h.rows(); ++t) {
    out.push_back(sigmoid(head_logits(weights, L.w_out, L.b_out, L.hid, tr.h.row(t).transpose())(0)));
  }
  return out;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

Eigen::VectorXd softmax_head(const ModelWeights& weights, const Sequence& input) {
  return softmax(logits(weights, input));
}

double loss(const ModelWeights& weights, const LabeledBatch& batch) {
  if (batch.empty()) throw InputError("loss: empty batch");
  batch.validate();
  const auto probs = forward_batch(weights, batch.inputs);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) total += bce(probs[i], batch.labels[i]);
  return total / static_cast<double>(batch.size());
}

void accumulate_gradient(const ModelWeights& weights, const Sequence& input,
                         std::span<const double> dlogits, std::span<double> grad) {
  check_params(weights);
  check_input(weights.spec, input);
  const auto out = static_cast<Eigen::Index>(weights.spec.output_dim);
  if (dlogits.size() != weights.spec.output_dim || grad.size() != weights.params.size()) {
    throw InputError("accumulate_gradient: buffer size mismatch");
  }
  ConstVecMap dz(dlogits.data(), out);
  const double* p = weights.params.data();
  double* g = grad.data();

  if (weights.spec.cell == CellKind::dense) {
    const DenseLayout L(weights.spec);
    const Eigen::VectorXd x = input.row(0).transpose();
    const Eigen::VectorXd hidden = dense_hidden(weights, L, x);
    const auto fan_in = static_cast<Eigen::Index>(L.hid == 0 ? L.in : L.hid);
    MatMap(g + L.w_out, out, fan_in).noalias() += dz * hidden.transpose();
    VecMap(g + L.b_out, out) += dz;
    if (L.hid == 0) return;
    const auto H = static_cast<Eigen::Index>(L.hid);
    ConstMatMap Wo(p + L.w_out, out, H);
    const Eigen::VectorXd da =
        ((Wo.transpose() * dz).array() * (1.0 - hidden.array().square())).matrix();
    MatMap(g + L.w_hidden, H, static_cast<Eigen::Index>(L.in)).noalias() += da * x.transpose();
    VecMap(g + L.b_hidden, H) += da;
    return;
  }

  const RecurrentLayout L(weights.spec);
  const auto H = static_cast<Eigen::Index>(L.hid);
  const auto T = input.rows();
  const RecurrentTrace tr = run_recurrent(weights, input);
  ConstMatMap U(p + L.u, 3 * H, H);
  ConstMatMap Wo(p + L.w_out, out, H);

  MatMap(g + L.w_out, out, H).noalias() += dz * tr.h.row(T);
  VecMap(g + L.b_out, out) += dz;

  MatMap gU(g + L.u, 3 * H, H);
  MatRM da(T, 3 * H);
  Eigen::VectorXd dh = Wo.transpose() * dz;
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const Eigen::ArrayXd h_prev = tr.h.row(t).transpose().array();
    const Eigen::ArrayXd z = tr.z.row(t).transpose().array();
    const Eigen::ArrayXd r = tr.r.row(t).transpose().array();
    const Eigen::ArrayXd c = tr.c.row(t).transpose().array();
    const Eigen::ArrayXd dh_a = dh.array();

    const Eigen::VectorXd da_c = (dh_a * z * (1.0 - c.square())).matrix();
    const Eigen::ArrayXd da_z = dh_a * (c - h_prev) * z * (1.0 - z);
    const Eigen::ArrayXd d_rh = (U.bottomRows(H).transpose() * da_c).array();
    const Eigen::ArrayXd da_r = d_rh * h_prev * r * (1.0 - r);

    da.row(t).head(H) = da_z.matrix().transpose();
    da.row(t).segment(H, H) = da_r.matrix().transpose();
    da.row(t).tail(H) = da_c.transpose();

    const Eigen::VectorXd da_zr = da.row(t).head(2 * H).transpose();
    gU.topRows(2 * H).noalias() += da_zr * h_prev.matrix().transpose();
    gU.bottomRows(H).noalias() += da_c * (r * h_prev).matrix().transpose();

    dh = (dh_a * (1.0 - z) + d_rh * r).matrix() + U.topRows(2 * H).transpose() * da_zr;
  }
  MatMap(g + L.w, 3 * H, static_cast<Eigen::Index>(L.in)).noalias() += da.transpose() * input;
  VecMap(g + L.b, 3 * H) += da.colwise().sum().transpose();
}

std::vector<double> loss_gradient(const ModelWeights& weights, const LabeledBatch& batch) {
  if (batch.empty()) throw InputError("loss_gradient: empty batch");
  batch.validate();
  std::vector<double> grad(weights.params.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  if (weights.spec.cell == CellKind::gated_recurrent) {
    check_params(weights);
    for (const auto& s : batch.inputs) check_input(weights.spec, s);
    for (const auto& idx : length_groups(batch.inputs)) {
      const auto x = stack_steps(batch.inputs, idx);
      const auto tr = run_recurrent_batch(weights, x);
      const Eigen::VectorXd prob = batch_head(weights, tr.h.back());
      Eigen::VectorXd dlogit(prob.size());
      for (Eigen::Index i = 0; i < prob.size(); ++i) {
        dlogit(i) = bce_logit_grad(prob(i), batch.labels[idx[static_cast<std::size_t>(i)]]) * inv_n;
      }
      accumulate_batch_gradient(weights, x, tr, dlogit, grad.data());
    }
    return grad;
  }
  std::vector<double> dlogits(weights.spec.output_dim, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double p = forward(weights, batch.inputs[i]);
    dlogits[0] = bce_logit_grad(p, batch.labels[i]) * inv_n;
    if (dlogits[0] == 0.0) continue;
    accumulate_gradient(weights, batch.inputs[i], dlogits, grad);
  }
  return grad;
}

ModelWeights apply_gradient(const ModelWeights& weights, std::span<const double> grad, double lr) {
  if (grad.size() != weights.params.size()) {
    throw InputError("apply_gradient: gradient size mismatch");
  }
  std::size_t offset = 0;
  for (const auto& t : weights.shapes()) {
    const auto n = t.size();
    for (std::size_t i = offset; i < offset + n; ++i) {
      if (!std::isfinite(grad[i])) {
        throw NumericError(t.name, "non-finite gradient in tensor '" + t.name + "' of model '" +
                                       weights.spec.model_id + "'");
      }
    }
    offset += n;
  }
  ModelWeights next = weights;
  for (std::size_t i = 0; i < next.params.size(); ++i) next.params[i] -= lr * grad[i];
  return next;
}

ModelWeights gd_step(const ModelWeights& weights, const LabeledBatch& batch, double lr) {
  if (!(lr >= 0.0)) throw InputError("gd_step: learning rate must be non-negative");
  const auto grad = loss_gradient(weights, batch);
  return apply_gradient(weights, grad, lr);
}

ModelWeights train_local(ModelWeights weights, const LabeledBatch& batch, double lr,
                         std::size_t iterations) {
  if (iterations == 0) throw InputError("train_local: iteration count must be >= 1");
  for (std::size_t k = 0; k < iterations; ++k) weights = gd_step(weights, batch, lr);
  return weights;
}

void write_weights(std::ostream& out, const ModelWeights& weights) {
  const auto& s = weights.spec;
  out << "# model " << s.model_id << ' ' << to_string(s.cell) << ' ' << s.input_dim << ' '
      << s.hidden_dim << ' ' << s.output_dim << '\n';
  for (const auto& t : weights.shapes()) {
    out << "# tensor " << t.name;
    for (auto d : t.dims) out << ' ' << d;
    out << '\n';
  }
  out.precision(17);
  for (double v : weights.params) out << v << '\n';
}

ModelWeights read_weights(std::istream& in) {
  std::string line;
  ModelSpec spec;
  bool have_spec = false;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# model ", 0) == 0) {
      std::istringstream ss(line.substr(8));
      std::string cell;
      ss >> spec.model_id >> cell >> spec.input_dim >> spec.hidden_dim >> spec.output_dim;
      if (!ss) throw InputError("read_weights: malformed model header");
      spec.cell = cell_kind_from_string(cell);
      have_spec = true;
      continue;
    }
    if (line[0] == '#') continue;
    values.push_back(std::stod(line));
  }
  if (!have_spec) throw InputError("read_weights: missing model header");
  spec.validate();
  if (values.size() != param_count(spec)) {
    throw InputError("read_weights: expected " + std::to_string(param_count(spec)) +
                     " values, got " + std::to_string(values.size()));
  }
  return ModelWeights{spec, std::move(values)};
}

}  // namespace mmfl::nn
