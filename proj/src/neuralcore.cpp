// SPDX-License-Identifier: Apache-2.0
#include "lfme/neuralcore.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "lfme/distribution.hpp"
#include "lfme/kernels.hpp"

namespace lfme {

DenseNet::DenseNet(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2)
    throw std::invalid_argument("a network needs an input and an output size");
  for (auto d : dims_)
    if (d == 0) throw std::invalid_argument("layer sizes must be positive");
  for (std::size_t k = 0; k + 1 < dims_.size(); ++k) {
    DenseLayer layer;
    layer.in = dims_[k];
    layer.out = dims_[k + 1];
    layer.weights.assign(layer.in * layer.out, 0.0);
    layer.bias.assign(layer.out, 0.0);
    layers_.push_back(std::move(layer));
  }
}

DenseNet DenseNet::initialized(std::vector<std::size_t> dims, std::uint64_t seed) {
  DenseNet net(std::move(dims));
  std::mt19937_64 rng(seed);
  for (auto& layer : net.layers_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& w : layer.weights) w = u(rng);
  }
  return net;
}

std::size_t DenseNet::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<double> DenseNet::forward(std::span<const double> x) const {
  if (x.size() != input_dim())
    throw std::invalid_argument("input has " + std::to_string(x.size()) +
                                " features, network expects " +
                                std::to_string(input_dim()));
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    next.resize(l.out);
    kernels::gemv(l.weights, l.out, l.in, a, l.bias, next);
    if (k + 1 < layers_.size()) kernels::relu(next);
    a.swap(next);
  }
  return a;
}

std::size_t DenseNet::predict(std::span<const double> x) const {
  const auto z = forward(x);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

GradientSet zeros_like(const DenseNet& net) {
  GradientSet g;
  for (const auto& l : net.layers()) {
    DenseLayer z;
    z.in = l.in;
    z.out = l.out;
    z.weights.assign(l.weights.size(), 0.0);
    z.bias.assign(l.bias.size(), 0.0);
    g.layers.push_back(std::move(z));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Losses

namespace {

void check_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t))
    throw std::invalid_argument("temperature must be positive and finite");
}

// log softmax(z / T) into `out`.
void log_softmax_into(std::span<const double> z, double t, std::span<double> out) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += std::exp((z[i] - m) / t);
  const double log_s = std::log(s);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = (z[i] - m) / t - log_s;
}

}  // namespace

std::vector<double> temperature_softmax(std::span<const double> z, double temperature) {
  check_temperature(temperature);
  if (z.empty()) return {};
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp((z[i] - m) / temperature);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

double ce_loss(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size())
    throw std::out_of_range("label " + std::to_string(label) + " outside " +
                            std::to_string(logits.size()) + " logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  return std::max(0.0, std::log(s) - (logits[label] - m));
}

double kd_loss(std::span<const double> expert_logits,
               std::span<const double> student_slice, double temperature) {
  check_temperature(temperature);
  if (expert_logits.size() != student_slice.size())
    throw std::invalid_argument("expert and student slices differ in length");
  if (expert_logits.empty()) return 0.0;
  const auto p = temperature_softmax(expert_logits, temperature);
  std::vector<double> log_q(student_slice.size());
  log_softmax_into(student_slice, temperature, log_q);
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) loss -= p[i] * log_q[i];
  return loss;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

// ---------------------------------------------------------------------------
// Loss + gradients

namespace {

void validate_inputs(const DenseNet& net, const Batch& batch,
                     std::span<const ExpertTargets> experts,
                     std::span<const double> expert_weights,
                     const LossConfig& cfg) {
  check_temperature(cfg.temperature);
  const std::size_t b = batch.size();
  if (b == 0) throw std::invalid_argument("empty batch");
  if (batch.features.size() != b * net.input_dim())
    throw std::invalid_argument("batch features do not match batch size x input dim");
  if (batch.ce_weights.size() != b)
    throw std::invalid_argument("one CE weight per instance required");
  for (double v : batch.ce_weights)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("CE weight outside [0,1]");
  for (auto y : batch.labels)
    if (y >= net.output_dim()) throw std::invalid_argument("label outside network outputs");
  if (expert_weights.size() != experts.size())
    throw std::invalid_argument("one weight per expert required");
  for (double w : expert_weights)
    if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("expert weight outside [0,1]");
  for (const auto& e : experts) {
    if (e.slice.empty()) throw std::invalid_argument("expert slice is empty");
    if (e.logits.size() != b * e.slice.size())
      throw std::invalid_argument("expert logits do not match batch x slice size");
    for (auto idx : e.slice)
      if (idx >= net.output_dim())
        throw std::invalid_argument("expert slice index outside network outputs");
  }
}

}  // namespace

LossBreakdown loss_and_gradients(const DenseNet& net, const Batch& batch,
                                 std::span<const ExpertTargets> experts,
                                 std::span<const double> expert_weights,
                                 const LossConfig& cfg, GradientSet& grads) {
  validate_inputs(net, batch, experts, expert_weights, cfg);
  const auto& layers = net.layers();
  const std::size_t num_layers = layers.size();
  const std::size_t b = batch.size();
  const double inv_b = 1.0 / static_cast<double>(b);
  const double t = cfg.temperature;
  const double kd_scale = cfg.kd_t2_scaling ? t * t : 1.0;

  bool shaped = grads.layers.size() == num_layers;
  for (std::size_t k = 0; shaped && k < num_layers; ++k)
    shaped = grads.layers[k].in == layers[k].in && grads.layers[k].out == layers[k].out;
  if (!shaped) grads = zeros_like(net);
  for (auto& g : grads.layers) {
    std::fill(g.weights.begin(), g.weights.end(), 0.0);
    std::fill(g.bias.begin(), g.bias.end(), 0.0);
  }

  LossBreakdown out;
  out.kd_per_expert.assign(experts.size(), 0.0);

  // acts[k] is the input to layer k; acts[num_layers] holds the logits.
  std::vector<std::vector<double>> acts(num_layers + 1);
  for (std::size_t k = 0; k <= num_layers; ++k) acts[k].resize(net.dims()[k]);
  std::vector<std::vector<double>> deltas(num_layers);
  for (std::size_t k = 0; k < num_layers; ++k) deltas[k].resize(layers[k].out);
  std::vector<double> log_p_student;
  std::vector<double> q_student;
  std::vector<double> slice_logits;

  const std::size_t d = net.input_dim();
  for (std::size_t i = 0; i < b; ++i) {
    const auto x = batch.features.subspan(i * d, d);
    std::copy(x.begin(), x.end(), acts[0].begin());
    for (std::size_t k = 0; k < num_layers; ++k) {
      const auto& l = layers[k];
      kernels::gemv(l.weights, l.out, l.in, acts[k], l.bias, acts[k + 1]);
      if (k + 1 < num_layers) kernels::relu(acts[k + 1]);
    }
    const auto& logits = acts[num_layers];
    auto& delta = deltas[num_layers - 1];

    // Weighted CE: d/dz = v (softmax(z) - onehot) / B.
    const std::size_t y = batch.labels[i];
    const double v = batch.ce_weights[i];
    log_p_student.resize(logits.size());
    log_softmax_into(logits, 1.0, log_p_student);
    out.weighted_ce += v * inv_b * std::max(0.0, -log_p_student[y]);
    for (std::size_t j = 0; j < logits.size(); ++j)
      delta[j] = v * inv_b * (std::exp(log_p_student[j]) - (j == y ? 1.0 : 0.0));

    // KD per expert: d/dz_slice = w s (q - p) / (T B).
    for (std::size_t e = 0; e < experts.size(); ++e) {
      const auto& ex = experts[e];
      const std::size_t m = ex.slice.size();
      const auto teacher = ex.logits.subspan(i * m, m);
      const auto p = temperature_softmax(teacher, t);
      slice_logits.resize(m);
      for (std::size_t j = 0; j < m; ++j) slice_logits[j] = logits[ex.slice[j]];
      q_student.resize(m);
      log_softmax_into(slice_logits, t, q_student);
      double kd = 0.0;
      for (std::size_t j = 0; j < m; ++j) kd -= p[j] * q_student[j];
      out.kd_per_expert[e] += kd_scale * inv_b * kd;
      const double coef = expert_weights[e] * kd_scale * inv_b / t;
      for (std::size_t j = 0; j < m; ++j)
        delta[ex.slice[j]] += coef * (std::exp(q_student[j]) - p[j]);
    }

    for (std::size_t k = num_layers; k-- > 0;) {
      const auto& l = layers[k];
      auto& g = grads.layers[k];
      kernels::ger_acc(g.weights, l.out, l.in, deltas[k], acts[k]);
      kernels::axpy(1.0, deltas[k], g.bias);
      if (k > 0) {
        auto& prev = deltas[k - 1];
        std::fill(prev.begin(), prev.end(), 0.0);
        kernels::gemv_t_acc(l.weights, l.out, l.in, deltas[k], prev);
        kernels::relu_backward(acts[k], prev);
      }
    }
  }

  out.total = out.weighted_ce;
  for (std::size_t e = 0; e < experts.size(); ++e)
    out.total += expert_weights[e] * out.kd_per_expert[e];
  return out;
}

LossBreakdown evaluate_loss(const DenseNet& net, const Batch& batch,
                            std::span<const ExpertTargets> experts,
                            std::span<const double> expert_weights,
                            const LossConfig& cfg) {
  validate_inputs(net, batch, experts, expert_weights, cfg);
  const std::size_t b = batch.size();
  const std::size_t d = net.input_dim();
  const double inv_b = 1.0 / static_cast<double>(b);
  const double kd_scale = cfg.kd_t2_scaling ? cfg.temperature * cfg.temperature : 1.0;
  LossBreakdown out;
  out.kd_per_expert.assign(experts.size(), 0.0);
  std::vector<double> slice;
  for (std::size_t i = 0; i < b; ++i) {
    const auto z = net.forward(batch.features.subspan(i * d, d));
    out.weighted_ce += batch.ce_weights[i] * inv_b * ce_loss(z, batch.labels[i]);
    for (std::size_t e = 0; e < experts.size(); ++e) {
      const auto& ex = experts[e];
      const std::size_t m = ex.slice.size();
      slice.resize(m);
      for (std::size_t j = 0; j < m; ++j) slice[j] = z[ex.slice[j]];
      out.kd_per_expert[e] +=
          kd_scale * inv_b * kd_loss(ex.logits.subspan(i * m, m), slice, cfg.temperature);
    }
  }
  out.total = out.weighted_ce;
  for (std::size_t e = 0; e < experts.size(); ++e)
    out.total += expert_weights[e] * out.kd_per_expert[e];
  return out;
}

// ---------------------------------------------------------------------------
// SGD

void sgd_step(DenseNet& net, const GradientSet& grads, const SgdParams& params,
              SgdState& state) {
  auto& layers = net.layers();
  if (grads.layers.size() != layers.size())
    throw std::invalid_argument("gradient set does not match network");
  if (state.velocity.layers.size() != layers.size()) state.velocity = zeros_like(net);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    auto& l = layers[k];
    const auto& g = grads.layers[k];
    auto& v = state.velocity.layers[k];
    if (g.weights.size() != l.weights.size() || g.bias.size() != l.bias.size())
      throw std::invalid_argument("gradient shape mismatch in layer " + std::to_string(k));
    kernels::sgd_momentum(l.weights, v.weights, g.weights, params.lr, params.momentum,
                          params.weight_decay);
    kernels::sgd_momentum(l.bias, v.bias, g.bias, params.lr, params.momentum, 0.0);
  }
}

// ---------------------------------------------------------------------------
// Gradient check

double gradient_rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / scale;
}

double max_gradient_error(const DenseNet& net, const Batch& batch,
                          std::span<const ExpertTargets> experts,
                          std::span<const double> expert_weights,
                          const LossConfig& cfg, double step,
                          std::size_t* params_checked) {
  GradientSet analytic;
  loss_and_gradients(net, batch, experts, expert_weights, cfg, analytic);
  DenseNet probe = net;
  double worst = 0.0;
  std::size_t checked = 0;
  auto check = [&](double& param, double a) {
    const double saved = param;
    param = saved + step;
    const double up = evaluate_loss(probe, batch, experts, expert_weights, cfg).total;
    param = saved - step;
    const double down = evaluate_loss(probe, batch, experts, expert_weights, cfg).total;
    param = saved;
    worst = std::max(worst, gradient_rel_error(a, (up - down) / (2.0 * step)));
    ++checked;
  };
  for (std::size_t k = 0; k < probe.layers().size(); ++k) {
    auto& l = probe.layers()[k];
    for (std::size_t i = 0; i < l.weights.size(); ++i)
      check(l.weights[i], analytic.layers[k].weights[i]);
    for (std::size_t i = 0; i < l.bias.size(); ++i)
      check(l.bias[i], analytic.layers[k].bias[i]);
  }
  if (params_checked) *params_checked += checked;
  return worst;
}

GradCheckReport grad_check(const GradCheckConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, std::max(lo, hi))(rng);
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double temps[] = {1.0, 2.0, 4.0};

  GradCheckReport rep;
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    const std::size_t d = pick(1, cfg.max_input);
    const std::size_t h = pick(1, cfg.max_hidden);
    const std::size_t c = pick(2, cfg.max_classes);
    const std::size_t num_experts = pick(1, std::min(cfg.max_experts, c));
    const std::size_t b = pick(1, cfg.max_batch);

    DenseNet net = cfg.degenerate ? DenseNet({d, h, c})
                                  : DenseNet::initialized({d, h, c}, rng());
    if (!cfg.degenerate)
      for (auto& l : net.layers())
        for (auto& bias : l.bias) bias = 0.1 * normal(rng);

    std::vector<double> feats(b * d);
    for (auto& f : feats) f = normal(rng);
    if (cfg.degenerate)
      for (std::size_t i = 1; i < b; ++i)
        std::copy_n(feats.begin(), d, feats.begin() + static_cast<std::ptrdiff_t>(i * d));
    std::vector<std::size_t> labels(b);
    std::vector<double> v(b);
    for (std::size_t i = 0; i < b; ++i) {
      labels[i] = cfg.degenerate ? 0 : pick(0, c - 1);
      v[i] = unit(rng);
    }

    // Partition the classes into contiguous non-empty slices.
    std::vector<std::size_t> cuts;
    {
      std::vector<std::size_t> pos(c - 1);
      for (std::size_t i = 0; i + 1 < c; ++i) pos[i] = i + 1;
      std::shuffle(pos.begin(), pos.end(), rng);
      cuts.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(num_experts - 1));
      std::sort(cuts.begin(), cuts.end());
      cuts.insert(cuts.begin(), 0);
      cuts.push_back(c);
    }
    std::vector<std::vector<std::size_t>> slices(num_experts);
    std::vector<std::vector<double>> teacher(num_experts);
    std::vector<ExpertTargets> experts;
    std::vector<double> w(num_experts);
    for (std::size_t e = 0; e < num_experts; ++e) {
      for (std::size_t j = cuts[e]; j < cuts[e + 1]; ++j) slices[e].push_back(j);
      teacher[e].resize(b * slices[e].size());
      for (auto& z : teacher[e]) z = 2.0 * normal(rng);
      w[e] = unit(rng);
    }
    for (std::size_t e = 0; e < num_experts; ++e)
      experts.push_back({slices[e], teacher[e]});

    LossConfig lc;
    lc.temperature = temps[pick(0, 2)];
    const Batch batch{feats, labels, v};
    rep.max_rel_error = std::max(
        rep.max_rel_error,
        max_gradient_error(net, batch, experts, w, lc, cfg.step, &rep.params_checked));
    ++rep.trials;
  }
  rep.passed = rep.max_rel_error < cfg.tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   lfme-densenet v1
//   dims <d> <h1> ... <out>
//   w <values...>      one line per layer, row-major
//   b <values...>

std::string format_checkpoint(const DenseNet& net) {
  std::string out = "lfme-densenet v1\ndims";
  for (auto d : net.dims()) out += " " + std::to_string(d);
  out += "\n";
  for (const auto& l : net.layers()) {
    out += "w";
    for (double v : l.weights) out += " " + format_double(v);
    out += "\nb";
    for (double v : l.bias) out += " " + format_double(v);
    out += "\n";
  }
  return out;
}

DenseNet parse_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("lfme-densenet", 0) != 0)
    throw FormatError("not an lfme network checkpoint");
  if (line != "lfme-densenet v1")
    throw FormatError("unsupported checkpoint version: " + line);
  if (!std::getline(in, line) || line.rfind("dims", 0) != 0)
    throw FormatError("checkpoint missing dims line");
  std::vector<std::size_t> dims;
  {
    std::istringstream ls(line.substr(4));
    std::size_t d;
    while (ls >> d) dims.push_back(d);
  }
  DenseNet net;
  try {
    net = DenseNet(dims);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad checkpoint dims: ") + e.what());
  }
  auto read_values = [&](char tag, std::vector<double>& dst) {
    if (!std::getline(in, line) || line.empty() || line[0] != tag)
      throw FormatError(std::string("truncated checkpoint, expected '") + tag + "' line");
    std::istringstream ls(line.substr(1));
    std::string tok;
    std::size_t n = 0;
    while (ls >> tok) {
      if (n >= dst.size()) throw FormatError("too many values in checkpoint layer");
      const char* end = tok.data() + tok.size();
      auto [ptr, ec] = std::from_chars(tok.data(), end, dst[n]);
      if (ec != std::errc() || ptr != end)
        throw FormatError("bad number in checkpoint: " + tok);
      ++n;
    }
    if (n != dst.size()) throw FormatError("too few values in checkpoint layer");
  };
  for (auto& l : net.layers()) {
    read_values('w', l.weights);
    read_values('b', l.bias);
  }
  return net;
}

void save_checkpoint(const DenseNet& net, const std::filesystem::path& path) {
  write_text_file(path, format_checkpoint(net));
}

DenseNet load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_text_file(path));
}

}  // namespace lfme
