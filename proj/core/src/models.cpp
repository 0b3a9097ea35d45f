#include "zotune/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "zotune/error.hpp"
#include "zotune/rng.hpp"

namespace zotune {

void validate_batch(const Batch& batch, std::size_t num_classes) {
  if (batch.rows == 0) throw StructuralError("batch has no rows");
  if (batch.inputs.size() != batch.rows * batch.cols) {
    throw StructuralError(fmt::format("batch inputs hold {} values, expected {} x {}",
                                      batch.inputs.size(), batch.rows, batch.cols));
  }
  if (num_classes == 0) return;
  if (batch.labels.size() != batch.rows) {
    throw StructuralError(fmt::format("batch has {} labels for {} rows", batch.labels.size(),
                                      batch.rows));
  }
  for (auto label : batch.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw StructuralError(fmt::format("label {} outside [0, {})", label, num_classes));
    }
  }
}

Batch concat(std::span<const Batch> batches) {
  if (batches.empty()) throw StructuralError("concat of zero batches");
  Batch out;
  out.cols = batches.front().cols;
  for (const auto& b : batches) {
    if (b.cols != out.cols) throw StructuralError("concat: column counts differ");
    out.rows += b.rows;
    out.inputs.insert(out.inputs.end(), b.inputs.begin(), b.inputs.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  }
  return out;
}

double LossOracle::evaluate(const ParamSet& params, const Batch& batch) const {
  require_same_shape(params, param_template(), name());
  const double value = loss(params, batch);
  if (!std::isfinite(value)) {
    throw NumericError(fmt::format("{}: loss is not finite", name()));
  }
  return value;
}

ParamSet LossOracle::analytic_gradient(const ParamSet& params, const Batch& batch) const {
  require_same_shape(params, param_template(), name());
  ParamSet out(params.specs());
  gradient(params, batch, out);
  return out;
}

void LossOracle::gradient(const ParamSet&, const Batch&, ParamSet&) const {
  throw ConfigError(fmt::format("{} has no analytic gradient", name()));
}

double log_sum_exp(std::span<const double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - top);
  return top + std::log(sum);
}

void softmax_in_place(std::span<double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - top);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

double cross_entropy(std::span<const double> logits, std::int32_t label) {
  return log_sum_exp(logits) - logits[static_cast<std::size_t>(label)];
}

namespace {

// N(0, 1/fan_in) entries drawn from the layer's own stream.
void gaussian_init(ParamSet& params, std::size_t layer, std::size_t fan_in, std::uint64_t seed) {
  LayerNoise noise(seed, params.spec(layer).name);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : params.values(layer)) x = stddev * noise.next();
}

// y = W x (+ b), W row-major out x in.
void matvec(std::span<const double> w, std::span<const double> x, std::span<double> y) {
  const std::size_t in = x.size();
  for (std::size_t r = 0; r < y.size(); ++r) {
    const double* row = w.data() + r * in;
    double acc = 0.0;
    for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

// ---------------------------------------------------------------- quadratic

namespace {

ParamSet quadratic_template(const std::vector<QuadraticLayer>& layers) {
  std::vector<LayerSpec> specs;
  for (const auto& layer : layers) {
    if (!(layer.curvature > 0.0)) {
      throw ConfigError(fmt::format("layer '{}': curvature must be positive", layer.name));
    }
    specs.push_back({layer.name, layer.role, layer.optimum.size()});
  }
  return ParamSet(std::move(specs));
}

}  // namespace

QuadraticTask::QuadraticTask(std::vector<QuadraticLayer> layers)
    : layers_(std::move(layers)), init_(quadratic_template(layers_)) {}

QuadraticTask QuadraticTask::heterogeneous(const HeteroOptions& options, std::uint64_t seed) {
  if (options.layers == 0 || options.dim == 0) {
    throw ConfigError("quadratic task needs at least one layer of positive dim");
  }
  std::vector<QuadraticLayer> layers;
  for (std::size_t l = 0; l < options.layers; ++l) {
    const double frac = options.layers == 1
                            ? 0.0
                            : static_cast<double>(l) / static_cast<double>(options.layers - 1);
    QuadraticLayer layer;
    layer.name = fmt::format("block{}", l);
    layer.role = Role::Dense;
    layer.curvature = options.curvature * std::pow(options.curvature_span, frac);
    const double radius = options.radius_min * std::pow(options.radius_span, frac);
    LayerNoise noise(seed, layer.name);
    layer.optimum.resize(options.dim);
    for (double& x : layer.optimum) x = noise.next();
    const double norm = l2_norm(layer.optimum);
    for (double& x : layer.optimum) x *= radius / norm;
    layers.push_back(std::move(layer));
  }
  return QuadraticTask(std::move(layers));
}

ParamSet QuadraticTask::optimum() const {
  ParamSet out = init_;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    std::copy(layers_[l].optimum.begin(), layers_[l].optimum.end(), out.values(l).begin());
  }
  return out;
}

std::vector<Batch> QuadraticTask::make_batches(std::size_t count, double noise,
                                               std::uint64_t seed) const {
  std::vector<Batch> out(count);
  Xoshiro256 rng(seed);
  for (auto& batch : out) {
    batch.rows = 1;
    if (noise > 0.0) {
      batch.targets.resize(init_.total_dim());
      for (double& x : batch.targets) x = noise * rng.normal();
    }
  }
  return out;
}

double QuadraticTask::loss(const ParamSet& params, const Batch& batch) const {
  const bool shifted = !batch.targets.empty();
  if (shifted && batch.targets.size() != params.total_dim()) {
    throw StructuralError("quadratic batch shift has the wrong length");
  }
  double total = 0.0;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto theta = params.values(l);
    const auto& c = layers_[l].optimum;
    double sum = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double diff = theta[i] - c[i] - (shifted ? batch.targets[offset + i] : 0.0);
      sum += diff * diff;
    }
    total += 0.5 * layers_[l].curvature * sum;
    offset += theta.size();
  }
  return total;
}

void QuadraticTask::gradient(const ParamSet& params, const Batch& batch, ParamSet& out) const {
  const bool shifted = !batch.targets.empty();
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto theta = params.values(l);
    auto g = out.values(l);
    const auto& c = layers_[l].optimum;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      g[i] = layers_[l].curvature *
             (theta[i] - c[i] - (shifted ? batch.targets[offset + i] : 0.0));
    }
    offset += theta.size();
  }
}

// ------------------------------------------------------- softmax regression

SoftmaxRegression::SoftmaxRegression(std::size_t features, std::size_t classes,
                                     std::uint64_t seed)
    : features_(features),
      classes_(classes),
      init_({{"linear.weight", Role::Dense, classes * features},
             {"linear.bias", Role::Bias, classes}}) {
  if (features == 0 || classes < 2) throw ConfigError("softmax regression needs >= 2 classes");
  gaussian_init(init_, 0, features, seed);
}

void SoftmaxRegression::logits(const ParamSet& params, std::span<const double> x,
                               std::span<double> out) const {
  matvec(params.values(0), x, out);
  const auto b = params.values(1);
  for (std::size_t k = 0; k < classes_; ++k) out[k] += b[k];
}

double SoftmaxRegression::loss(const ParamSet& params, const Batch& batch) const {
  validate_batch(batch, classes_);
  if (batch.cols != features_) throw StructuralError("batch feature count mismatch");
  std::vector<double> z(classes_);
  double total = 0.0;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    logits(params, batch.row(r), z);
    total += cross_entropy(z, batch.labels[r]);
  }
  return total / static_cast<double>(batch.rows);
}

void SoftmaxRegression::gradient(const ParamSet& params, const Batch& batch,
                                 ParamSet& out) const {
  validate_batch(batch, classes_);
  std::vector<double> z(classes_);
  auto gw = out.values(0);
  auto gb = out.values(1);
  std::fill(gw.begin(), gw.end(), 0.0);
  std::fill(gb.begin(), gb.end(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.rows);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const auto x = batch.row(r);
    logits(params, x, z);
    softmax_in_place(z);
    z[static_cast<std::size_t>(batch.labels[r])] -= 1.0;
    for (std::size_t k = 0; k < classes_; ++k) {
      const double d = z[k] * inv_n;
      gb[k] += d;
      for (std::size_t j = 0; j < features_; ++j) gw[k * features_ + j] += d * x[j];
    }
  }
}

std::optional<double> SoftmaxRegression::accuracy(const ParamSet& params,
                                                  const Batch& batch) const {
  require_same_shape(params, init_, name());
  validate_batch(batch, classes_);
  std::vector<double> z(classes_);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    logits(params, batch.row(r), z);
    if (argmax(z) == static_cast<std::size_t>(batch.labels[r])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(batch.rows);
}

// ---------------------------------------------------------------------- mlp

Mlp::Mlp(std::size_t features, std::size_t hidden, std::size_t classes, std::uint64_t seed)
    : features_(features),
      hidden_(hidden),
      classes_(classes),
      init_({{"fc1.weight", Role::Dense, hidden * features},
             {"fc1.bias", Role::Bias, hidden},
             {"fc2.weight", Role::Dense, classes * hidden},
             {"fc2.bias", Role::Bias, classes}}) {
  if (features == 0 || hidden == 0 || classes < 2) {
    throw ConfigError("mlp needs features, hidden units and >= 2 classes");
  }
  gaussian_init(init_, 0, features, seed);
  gaussian_init(init_, 2, hidden, seed);
}

void Mlp::forward(const ParamSet& params, std::span<const double> x, std::span<double> hidden,
                  std::span<double> logits) const {
  matvec(params.values(0), x, hidden);
  const auto b1 = params.values(1);
  for (std::size_t h = 0; h < hidden_; ++h) hidden[h] = std::tanh(hidden[h] + b1[h]);
  matvec(params.values(2), hidden, logits);
  const auto b2 = params.values(3);
  for (std::size_t k = 0; k < classes_; ++k) logits[k] += b2[k];
}

double Mlp::loss(const ParamSet& params, const Batch& batch) const {
  validate_batch(batch, classes_);
  if (batch.cols != features_) throw StructuralError("batch feature count mismatch");
  std::vector<double> h(hidden_), z(classes_);
  double total = 0.0;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    forward(params, batch.row(r), h, z);
    total += cross_entropy(z, batch.labels[r]);
  }
  return total / static_cast<double>(batch.rows);
}

void Mlp::gradient(const ParamSet& params, const Batch& batch, ParamSet& out) const {
  validate_batch(batch, classes_);
  for (double& g : out.flat()) g = 0.0;
  auto g_w1 = out.values(0);
  auto g_b1 = out.values(1);
  auto g_w2 = out.values(2);
  auto g_b2 = out.values(3);
  const auto w2 = params.values(2);
  std::vector<double> h(hidden_), z(classes_), dh(hidden_);
  const double inv_n = 1.0 / static_cast<double>(batch.rows);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const auto x = batch.row(r);
    forward(params, x, h, z);
    softmax_in_place(z);
    z[static_cast<std::size_t>(batch.labels[r])] -= 1.0;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t k = 0; k < classes_; ++k) {
      const double d = z[k] * inv_n;
      g_b2[k] += d;
      for (std::size_t j = 0; j < hidden_; ++j) {
        g_w2[k * hidden_ + j] += d * h[j];
        dh[j] += d * w2[k * hidden_ + j];
      }
    }
    for (std::size_t j = 0; j < hidden_; ++j) {
      const double pre = dh[j] * (1.0 - h[j] * h[j]);
      g_b1[j] += pre;
      for (std::size_t i = 0; i < features_; ++i) g_w1[j * features_ + i] += pre * x[i];
    }
  }
}

std::optional<double> Mlp::accuracy(const ParamSet& params, const Batch& batch) const {
  require_same_shape(params, init_, name());
  validate_batch(batch, classes_);
  std::vector<double> h(hidden_), z(classes_);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    forward(params, batch.row(r), h, z);
    if (argmax(z) == static_cast<std::size_t>(batch.labels[r])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(batch.rows);
}

// ---------------------------------------------------------------- attention

namespace {
enum AttnLayer : std::size_t { kEmbed, kQ, kK, kV, kO, kHeadW, kHeadB };
}  // namespace

struct AttentionModel::Workspace {
  std::vector<double> x, q, k, v, z, scores, pooled, tmp, logits;

  explicit Workspace(const AttentionOptions& o)
      : x(o.seq_len * o.d_model),
        q(x.size()),
        k(x.size()),
        v(x.size()),
        z(x.size()),
        scores(o.seq_len * o.seq_len),
        pooled(o.d_model),
        tmp(o.d_model),
        logits(o.classes) {}
};

AttentionModel::AttentionModel(const AttentionOptions& options, std::uint64_t seed)
    : options_(options),
      init_({{"embed", Role::Other, options.vocab * options.d_model},
             {"attn.q", Role::AttnQ, options.d_model * options.d_model},
             {"attn.k", Role::AttnK, options.d_model * options.d_model},
             {"attn.v", Role::AttnV, options.d_model * options.d_model},
             {"attn.o", Role::AttnO, options.d_model * options.d_model},
             {"head.weight", Role::Dense, options.classes * options.d_model},
             {"head.bias", Role::Bias, options.classes}}) {
  if (options.d_model < 2) throw ConfigError("attention model needs d_model >= 2");
  if (options.classes < 2 || options.vocab < 2 || options.seq_len < 1) {
    throw ConfigError("attention model needs >= 2 classes, vocab >= 2 and seq_len >= 1");
  }
  gaussian_init(init_, kEmbed, options.vocab, seed);
  for (std::size_t l : {kQ, kK, kV, kO}) gaussian_init(init_, l, options.d_model, seed);
  gaussian_init(init_, kHeadW, options.d_model, seed);
}

void AttentionModel::forward(const ParamSet& params, std::span<const double> tokens,
                             Workspace& ws) const {
  const std::size_t s = options_.seq_len;
  const std::size_t d = options_.d_model;
  if (tokens.size() != s) throw StructuralError("token row length differs from seq_len");
  const auto embed = params.values(kEmbed);
  for (std::size_t i = 0; i < s; ++i) {
    const double raw = tokens[i];
    if (!(raw >= 0.0) || raw >= static_cast<double>(options_.vocab) || raw != std::floor(raw)) {
      throw StructuralError(fmt::format("token {} outside vocabulary", raw));
    }
    const auto id = static_cast<std::size_t>(raw);
    std::copy_n(embed.begin() + static_cast<std::ptrdiff_t>(id * d), d, ws.x.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  auto row = [d](std::vector<double>& m, std::size_t i) {
    return std::span<double>(m).subspan(i * d, d);
  };
  for (std::size_t i = 0; i < s; ++i) {
    const auto xi = row(ws.x, i);
    matvec(params.values(kQ), xi, row(ws.q, i));
    matvec(params.values(kK), xi, row(ws.k, i));
    matvec(params.values(kV), xi, row(ws.v, i));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < s; ++i) {
    auto scores = std::span<double>(ws.scores).subspan(i * s, s);
    for (std::size_t j = 0; j < s; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += ws.q[i * d + c] * ws.k[j * d + c];
      scores[j] = dot * inv_sqrt_d;
    }
    softmax_in_place(scores);
    auto zi = row(ws.z, i);
    std::fill(zi.begin(), zi.end(), 0.0);
    for (std::size_t j = 0; j < s; ++j) {
      for (std::size_t c = 0; c < d; ++c) zi[c] += scores[j] * ws.v[j * d + c];
    }
  }
  std::fill(ws.pooled.begin(), ws.pooled.end(), 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    matvec(params.values(kO), row(ws.z, i), ws.tmp);
    for (std::size_t c = 0; c < d; ++c) ws.pooled[c] += ws.x[i * d + c] + ws.tmp[c];
  }
  for (double& p : ws.pooled) p /= static_cast<double>(s);
  matvec(params.values(kHeadW), ws.pooled, ws.logits);
  const auto b = params.values(kHeadB);
  for (std::size_t k = 0; k < options_.classes; ++k) ws.logits[k] += b[k];
}

double AttentionModel::loss(const ParamSet& params, const Batch& batch) const {
  validate_batch(batch, options_.classes);
  Workspace ws(options_);
  double total = 0.0;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    forward(params, batch.row(r), ws);
    total += cross_entropy(ws.logits, batch.labels[r]);
  }
  return total / static_cast<double>(batch.rows);
}

std::optional<double> AttentionModel::accuracy(const ParamSet& params,
                                               const Batch& batch) const {
  require_same_shape(params, init_, name());
  validate_batch(batch, options_.classes);
  Workspace ws(options_);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    forward(params, batch.row(r), ws);
    if (argmax(ws.logits) == static_cast<std::size_t>(batch.labels[r])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(batch.rows);
}

std::vector<double> AttentionModel::attention_weights(const ParamSet& params,
                                                      std::span<const double> tokens) const {
  require_same_shape(params, init_, name());
  Workspace ws(options_);
  forward(params, tokens, ws);
  return ws.scores;
}

AttentionModel make_attention_model(std::size_t d_model, std::size_t num_classes,
                                    std::uint64_t seed) {
  AttentionOptions options;
  options.d_model = d_model;
  options.classes = num_classes;
  return AttentionModel(options, seed);
}

}  // namespace zotune
