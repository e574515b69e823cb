#pragma once

// Losses, Adam, finite-difference gradient checks and the training loop.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "localno/error.hpp"
#include "localno/field.hpp"
#include "localno/geometry.hpp"
#include "localno/model.hpp"
#include "localno/parallel.hpp"
#include "localno/rng.hpp"

namespace localno {

struct TrainConfig {
  double rate = 1e-3;
  double decay = 0.5;
  std::size_t interval = 10;  ///< epochs between decays
  std::size_t epochs = 50;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  std::string loss = "l2sq";

  void validate() const {
    require(rate > 0.0 && std::isfinite(rate), ErrorKind::InvalidArgument, "learning rate must be > 0");
    require(decay > 0.0 && decay <= 1.0, ErrorKind::InvalidArgument, "decay factor must be in (0, 1]");
    require(interval >= 1, ErrorKind::InvalidArgument, "decay interval must be >= 1");
    require(batch >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
    require(loss == "l2sq", ErrorKind::InvalidArgument, "unknown loss '" + loss + "' (supported: l2sq)");
  }

  /// rate * decay^floor(epoch / interval), computed by repeated
  /// multiplication so it is exact for decay = 0.5.
  double rate_at(std::size_t epoch) const {
    double r = rate;
    for (std::size_t k = 0; k < epoch / interval; ++k) r *= decay;
    return r;
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"rate", c.rate},   {"decay", c.decay}, {"interval", c.interval}, {"epochs", c.epochs},
          {"batch", c.batch}, {"seed", c.seed},   {"loss", c.loss}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.rate = j.value("rate", c.rate);
  c.decay = j.value("decay", c.decay);
  c.interval = j.value("interval", c.interval);
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.seed = j.value("seed", c.seed);
  c.loss = j.value("loss", c.loss);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Losses

namespace detail {

inline void check_pair(const Grid& grid, const Field& pred, const Field& target) {
  require(pred.same_shape(target), ErrorKind::InvalidArgument, "prediction and target shapes differ");
  require(pred.points() == grid.size(), ErrorKind::InvalidArgument, "field does not live on the grid");
}

/// Quadrature-weighted squared norm of one batch element over all channels.
inline double weighted_sq(const Grid& grid, const Field& f, std::size_t b, const Field* minus = nullptr) {
  double s = 0.0;
  for (std::size_t c = 0; c < f.channels(); ++c) {
    const auto v = f.channel(b, c);
    for (std::size_t p = 0; p < v.size(); ++p) {
      const double d = minus ? v[p] - (*minus)(b, c, p) : v[p];
      s += grid.weight(p) * d * d;
    }
  }
  return s;
}

}  // namespace detail

/// Per-sample ||pred - target||_q / ||target||_q, one entry per batch element.
inline std::vector<double> relative_l2_per_sample(const Grid& grid, const Field& pred, const Field& target) {
  detail::check_pair(grid, pred, target);
  std::vector<double> out(pred.batch());
  for (std::size_t b = 0; b < pred.batch(); ++b) {
    const double den = detail::weighted_sq(grid, target, b);
    require(den > 0.0, ErrorKind::DegenerateTarget, "relative L2 of an identically zero target");
    out[b] = std::sqrt(detail::weighted_sq(grid, pred, b, &target) / den);
  }
  return out;
}

/// Batch mean of the per-sample relative L2 error.
inline double relative_l2(const Grid& grid, const Field& pred, const Field& target) {
  const auto r = relative_l2_per_sample(grid, pred, target);
  require(!r.empty(), ErrorKind::InvalidArgument, "empty batch");
  double s = 0.0;
  for (double x : r) s += x;
  return s / static_cast<double>(r.size());
}

/// (1/B) sum_b ||(pred - target) / scale||_q^2; writes d loss / d pred into
/// `grad` when given.
inline double squared_l2_loss(const Grid& grid, const Field& pred, const Field& target, double scale = 1.0,
                              Field* grad = nullptr) {
  detail::check_pair(grid, pred, target);
  require(pred.batch() > 0, ErrorKind::InvalidArgument, "empty batch");
  const double inv = 1.0 / (scale * scale * static_cast<double>(pred.batch()));
  if (grad) *grad = Field(pred.batch(), pred.channels(), pred.points());
  double s = 0.0;
  for (std::size_t b = 0; b < pred.batch(); ++b)
    for (std::size_t c = 0; c < pred.channels(); ++c)
      for (std::size_t p = 0; p < pred.points(); ++p) {
        const double d = pred(b, c, p) - target(b, c, p);
        s += grid.weight(p) * d * d;
        if (grad) (*grad)(b, c, p) = 2.0 * grid.weight(p) * d * inv;
      }
  return s * inv;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<double> m, v;
};

/// One bias-corrected Adam update in place. Non-finite gradients leave the
/// parameters untouched and raise a diverged error.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s, double rate) {
  require(params.size() == grads.size(), ErrorKind::InvalidArgument, "parameter and gradient sizes differ");
  for (double g : grads) require(std::isfinite(g), ErrorKind::Diverged, "non-finite gradient");
  if (s.m.empty()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  require(s.m.size() == params.size(), ErrorKind::InvalidArgument, "optimizer state has the wrong size");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    const double mh = s.m[i] / c1, vh = s.v[i] / c2;
    params[i] -= rate * mh / (std::sqrt(vh) + s.eps);
  }
}

/// Adam over every parameter array of a model, in visit order.
inline void adam_step(LocalNOModel& model, const LocalNOModel& grads, AdamState& s, double rate) {
  std::vector<double> p = flatten_params(model);
  const std::vector<double> g = flatten_params(grads);
  adam_step(p, g, s, rate);
  unflatten_params(model, p);
}

// ---------------------------------------------------------------------------
// Gradient checks

struct GradCheckReport {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Central differences of `objective` at `params` along each checked
/// coordinate, compared with `analytic`. The relative error of a coordinate
/// is |a - n| / max(|a|, |n|, floor) with floor = 1e-4 * max_k |a_k|.
/// Rounding in the objective puts an absolute noise of about
/// eps |J| / step on every difference quotient; without the floor a
/// component 1e-6 of the largest one reports that noise as a 1e-5 error.
/// `max_coords` > 0 checks an evenly spread subset.
inline GradCheckReport grad_check(const std::string& name, const std::function<double(std::span<const double>)>& objective,
                                  std::span<const double> params, std::span<const double> analytic, double tolerance,
                                  double step = 1e-5, std::size_t max_coords = 0) {
  require(params.size() == analytic.size(), ErrorKind::InvalidArgument, "gradient size mismatch");
  GradCheckReport r{name, 0, 0.0, tolerance, false};
  double scale = 0.0;
  for (double a : analytic) scale = std::max(scale, std::abs(a));
  const double floor = std::max(1e-4 * scale, std::numeric_limits<double>::min());
  std::vector<double> x(params.begin(), params.end());
  const std::size_t n = params.size();
  const std::size_t stride = (max_coords == 0 || max_coords >= n) ? 1 : n / max_coords;
  for (std::size_t i = 0; i < n; i += stride) {
    const double keep = x[i];
    x[i] = keep + step;
    const double fp = objective(x);
    x[i] = keep - step;
    const double fm = objective(x);
    x[i] = keep;
    const double num = (fp - fm) / (2.0 * step);
    const double den = std::max({std::abs(analytic[i]), std::abs(num), floor});
    r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic[i] - num) / den);
    ++r.checked;
  }
  r.passed = r.max_rel_error <= tolerance;
  return r;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_rel_l2 = 0.0;
};

/// Inputs and targets on one grid; batch index = sample index.
struct SampleSet {
  Field input;
  Field target;
  std::size_t size() const { return input.batch(); }
};

struct TrainResult {
  LocalNOModel model;
  std::vector<EpochRecord> history;
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
};

namespace detail {

inline Field gather(const Field& f, std::span<const std::size_t> idx) {
  Field out(idx.size(), f.channels(), f.points());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto src = f.sample(idx[k]);
    std::copy(src.begin(), src.end(), out.sample(k).begin());
  }
  return out;
}

inline std::vector<std::size_t> range_indices(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v(end - begin);
  for (std::size_t i = begin; i < end; ++i) v[i - begin] = i;
  return v;
}

}  // namespace detail

/// Predictions for a whole set, evaluated in chunks of `chunk` samples.
inline Field predict(const LocalNOModel& m, const ModelContext& ctx, const Field& input, std::size_t chunk = 16) {
  Field out(input.batch(), m.config.out_channels, input.points());
  for (std::size_t b = 0; b < input.batch(); b += chunk) {
    const std::size_t e = std::min(input.batch(), b + chunk);
    const auto idx = detail::range_indices(b, e);
    const Field y = model_forward(m, ctx, detail::gather(input, idx));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto src = y.sample(k);
      std::copy(src.begin(), src.end(), out.sample(b + k).begin());
    }
  }
  return out;
}

/// Mean training loss over a set, in the normalized units used by training.
inline double evaluate_loss(const LocalNOModel& m, const ModelContext& ctx, const SampleSet& set, std::size_t chunk) {
  double total = 0.0;
  for (std::size_t b = 0; b < set.size(); b += chunk) {
    const auto idx = detail::range_indices(b, std::min(set.size(), b + chunk));
    const Field y = model_forward(m, ctx, detail::gather(set.input, idx));
    total += squared_l2_loss(*ctx.grid, y, detail::gather(set.target, idx), m.config.output_scale) *
             static_cast<double>(idx.size());
  }
  return total / static_cast<double>(set.size());
}

/// Loss and parameter gradient of one minibatch. Work is split over
/// batch elements by a fixed partition and reduced in worker order.
inline double batch_gradient(const LocalNOModel& m, const ModelContext& ctx, const Field& input, const Field& target,
                             LocalNOModel& grad) {
  const std::size_t B = input.batch();
  const std::size_t workers = std::min(worker_count(), B);
  std::vector<LocalNOModel> partial(workers);
  std::vector<double> losses(workers, 0.0);
  parallel_chunks(
      B,
      [&](std::size_t w, std::size_t begin, std::size_t end) {
        if (begin == end) return;
        const auto idx = detail::range_indices(begin, end);
        const Field x = detail::gather(input, idx);
        const Field t = detail::gather(target, idx);
        ModelTape tape;
        const Field y = model_forward(m, ctx, x, &tape);
        Field up;
        const double sub = static_cast<double>(end - begin) / static_cast<double>(B);
        losses[w] = squared_l2_loss(*ctx.grid, y, t, m.config.output_scale, &up) * sub;
        for (auto& v : up.values()) v *= sub;
        partial[w] = model_vjp(m, ctx, tape, up).params;
      },
      workers);
  grad = zeros_like(m);
  double loss = 0.0;
  for (std::size_t w = 0; w < workers; ++w) {
    if (partial[w].blocks.empty()) continue;
    accumulate_params(grad, partial[w]);
    loss += losses[w];
  }
  return loss;
}

struct TrainHooks {
  /// Called after every epoch with the updated model.
  std::function<void(const EpochRecord&, const LocalNOModel&)> on_epoch;
  /// Written with the last finite model if training diverges.
  std::optional<std::string> last_good_checkpoint;
};

/// Minibatch Adam on the squared L2 loss. Deterministic for a fixed seed:
/// the shuffle comes from Rng(seed) and every reduction has a fixed order.
inline TrainResult train_loop(LocalNOModel model, const ModelContext& ctx, const SampleSet& train, const SampleSet& val,
                              const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  require(train.size() > 0, ErrorKind::InvalidArgument, "training set is empty");
  require(train.input.same_shape(Field(train.size(), model.config.in_channels, ctx.grid->size())),
          ErrorKind::InvalidArgument, "training inputs do not match the model and grid");
  TrainResult result{model, {}, 0.0, 0.0};
  if (cfg.epochs == 0) return result;
  result.initial_train_loss = evaluate_loss(model, ctx, train, cfg.batch);
  AdamState adam;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  LocalNOModel grad;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    const double lr = cfg.rate_at(epoch);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(order.size(), b + cfg.batch) - b);
      const double loss =
          batch_gradient(model, ctx, detail::gather(train.input, idx), detail::gather(train.target, idx), grad);
      if (!std::isfinite(loss)) {
        if (hooks.last_good_checkpoint) write_checkpoint(model, *hooks.last_good_checkpoint);
        throw Error(ErrorKind::Diverged, "non-finite training loss at epoch " + std::to_string(epoch));
      }
      try {
        adam_step(model, grad, adam, lr);
      } catch (const Error&) {
        if (hooks.last_good_checkpoint) write_checkpoint(model, *hooks.last_good_checkpoint);
        throw;
      }
      total += loss * static_cast<double>(idx.size());
    }
    EpochRecord rec{epoch, lr, total / static_cast<double>(train.size()), 0.0};
    if (val.size() > 0)
      rec.val_rel_l2 = relative_l2(*ctx.grid, predict(model, ctx, val.input, cfg.batch), val.target);
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec, model);
  }
  result.final_train_loss = evaluate_loss(model, ctx, train, cfg.batch);
  result.model = std::move(model);
  return result;
}

/// Metrics CSV: epoch,lr,train_loss,val_rel_l2 with round-trip precision.
inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,lr,train_loss,val_rel_l2\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.lr, r.train_loss, r.val_rel_l2);
    out += buf;
  }
  return out;
}

}  // namespace localno
