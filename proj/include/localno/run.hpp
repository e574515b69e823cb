#pragma once

// Training and evaluation runs driven by a flat JSON settings object, shared
// by the command-line tool and the acceptance harness.

#include <cmath>
#include <string>

#include "localno/data.hpp"
#include "localno/model.hpp"
#include "localno/train.hpp"
#include "localno/vendor_json.hpp"

namespace localno {

/// Every key a training run understands, with its default.
inline nlohmann::json default_train_settings() {
  return {{"blocks", 4},
          {"width", 16},
          {"modes", 12},
          {"spectral", true},
          {"differential", false},
          {"local_integral", false},
          {"pointwise", true},
          {"diff_size", 3},
          {"diff_blocks", "all"},
          {"disco_cutoff", 0.05},
          {"disco_rings", 1},
          {"disco_azimuth", 4},
          {"disco_normalize", true},
          {"activation", "gelu"},
          {"padding", "reflective"},
          {"append_coords", true},
          {"normalize", true},
          {"init_seed", 1},
          {"rate", 1e-3},
          {"decay", 0.5},
          {"interval", 10},
          {"epochs", 50},
          {"batch", 16},
          {"seed", 0}};
}

/// Defaults overlaid with `overrides`; unknown keys are rejected so a typo
/// in a config file cannot silently fall back to a default.
inline nlohmann::json resolve_train_settings(const nlohmann::json& overrides) {
  auto s = default_train_settings();
  require(overrides.is_object(), ErrorKind::InvalidArgument, "training settings must be a JSON object");
  for (const auto& [key, value] : overrides.items()) {
    require(s.contains(key), ErrorKind::InvalidArgument, "unknown training setting '" + key + "'");
    s[key] = value;
  }
  return s;
}

/// Population standard deviation over every value of the field.
inline double field_std(const Field& f) {
  require(f.size() > 0, ErrorKind::InvalidArgument, "empty field");
  double mean = 0.0;
  for (double v : f.values()) mean += v;
  mean /= static_cast<double>(f.size());
  double var = 0.0;
  for (double v : f.values()) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(f.size()));
}

inline ModelConfig model_config_from_settings(const nlohmann::json& settings, const Dataset& train) {
  const auto s = resolve_train_settings(settings);
  BlockConfig b;
  b.spectral = s.at("spectral").get<bool>();
  b.differential = s.at("differential").get<bool>();
  b.local_integral = s.at("local_integral").get<bool>();
  b.pointwise = s.at("pointwise").get<bool>();
  b.width = s.at("width").get<std::size_t>();
  b.modes = s.at("modes").get<std::size_t>();
  b.diff_size = s.at("diff_size").get<std::size_t>();
  b.basis = RadialAnisotropicBasis(s.at("disco_cutoff").get<double>(), s.at("disco_rings").get<std::size_t>(),
                                   s.at("disco_azimuth").get<std::size_t>());
  auto cfg = ModelConfig::uniform(train.input.channels(), train.target.channels(), b.width,
                                  s.at("blocks").get<std::size_t>(), b);
  // Stacked differential branches compound their discretisation error when
  // the training grid under-resolves the data; "first" keeps only one.
  const auto diff_blocks = s.at("diff_blocks").get<std::string>();
  require(diff_blocks == "all" || diff_blocks == "first", ErrorKind::InvalidArgument,
          "diff_blocks must be all or first");
  if (diff_blocks == "first")
    for (std::size_t i = 1; i < cfg.blocks.size(); ++i) cfg.blocks[i].differential = false;
  for (const auto& blk : cfg.blocks)
    require(blk.enabled() >= 1, ErrorKind::InvalidArgument, "every block needs at least one branch");
  cfg.dim = train.grid.topology() == Topology::Sphere ? 3 : train.grid.dim();
  cfg.append_coords = s.at("append_coords").get<bool>();
  cfg.disco_normalize = s.at("disco_normalize").get<bool>();
  const auto act = s.at("activation").get<std::string>();
  require(act == "gelu" || act == "identity", ErrorKind::InvalidArgument, "activation must be gelu or identity");
  cfg.activation = act == "gelu" ? Activation::Gelu : Activation::Identity;
  cfg.padding = padding_from_string(s.at("padding").get<std::string>());
  if (s.at("normalize").get<bool>()) {
    cfg.input_scale = field_std(train.input);
    cfg.output_scale = field_std(train.target);
    require(cfg.input_scale > 0.0 && cfg.output_scale > 0.0, ErrorKind::DegenerateTarget,
            "training data has zero spread; cannot normalise");
  }
  cfg.validate();
  return cfg;
}

inline TrainConfig train_config_from_settings(const nlohmann::json& settings) {
  const auto s = resolve_train_settings(settings);
  TrainConfig c;
  c.rate = s.at("rate").get<double>();
  c.decay = s.at("decay").get<double>();
  c.interval = s.at("interval").get<std::size_t>();
  c.epochs = s.at("epochs").get<std::size_t>();
  c.batch = s.at("batch").get<std::size_t>();
  c.seed = s.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

inline void require_trainable(const Dataset& ds, const std::string& what) {
  require(ds.size() > 0, ErrorKind::IncompatibleDataset, what + " dataset is empty");
  require(ds.target.channels() > 0, ErrorKind::IncompatibleDataset,
          what + " dataset has no target channels (parabola files hold inputs only)");
}

/// Initialises a model from the settings and trains it on `train`,
/// validating on `val` (may be empty) after every epoch.
inline TrainResult train_on_dataset(const nlohmann::json& settings, const Dataset& train, const Dataset* val,
                                    const TrainHooks& hooks = {}) {
  require_trainable(train, "training");
  const auto s = resolve_train_settings(settings);
  const auto cfg = model_config_from_settings(s, train);
  const auto model = init_model(cfg, s.at("init_seed").get<std::uint64_t>());
  const auto ctx = prepare_context(model, train.grid);
  SampleSet val_set;
  if (val) {
    require_trainable(*val, "validation");
    require(val->grid.shape() == train.grid.shape() && val->grid.topology() == train.grid.topology(),
            ErrorKind::IncompatibleDataset, "validation data must share the training grid");
    val_set = {val->input, val->target};
  }
  return train_loop(model, ctx, {train.input, train.target}, val_set, train_config_from_settings(s), hooks);
}

/// The same analytic samples (same seeds) on an n x n unit-square grid.
inline Dataset regenerate_darcy(const Dataset& ds, std::size_t n) {
  require(ds.task == "darcy", ErrorKind::IncompatibleDataset,
          "only Darcy datasets can be regenerated at another resolution (task is '" + ds.task + "')");
  return gen_darcy_dataset(make_unit_square(n), ds.size(), ds.seed, ds.split);
}

struct EvalResult {
  double rel_l2 = 0.0;
  std::vector<double> per_sample;
  Field prediction;
};

/// Applies the model on the dataset's own grid (assembling any DISCO
/// kernels and differential widths for that grid) and scores it.
inline EvalResult evaluate_on_dataset(const LocalNOModel& m, const Dataset& ds, std::size_t chunk = 16) {
  require(ds.input.channels() == m.config.in_channels, ErrorKind::IncompatibleDataset,
          "dataset has " + std::to_string(ds.input.channels()) + " input channels, model expects " +
              std::to_string(m.config.in_channels));
  require(ds.target.channels() == m.config.out_channels, ErrorKind::IncompatibleDataset,
          "dataset target channels do not match the model output");
  const auto ctx = prepare_context(m, ds.grid);
  EvalResult r;
  r.prediction = predict(m, ctx, ds.input, chunk);
  r.per_sample = relative_l2_per_sample(ds.grid, r.prediction, ds.target);
  double s = 0.0;
  for (double v : r.per_sample) s += v;
  r.rel_l2 = s / static_cast<double>(r.per_sample.size());
  return r;
}

}  // namespace localno
