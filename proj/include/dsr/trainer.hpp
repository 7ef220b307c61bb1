#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dsr/error.hpp"
#include "dsr/image.hpp"
#include "dsr/network.hpp"
#include "dsr/pocs.hpp"
#include "dsr/rng.hpp"
#include "dsr/transform.hpp"

namespace dsr {

struct TrainExample {
  PaddedImage target;    // uncompressed ground truth
  PaddedImage x0;        // DC-only reconstruction
  MagnitudeField lambda; // dequantized magnitudes at the training QF
};

struct TrainConfig {
  int qf_pocs = 50;
  double lr = 2e-4;
  int batch = 10;
  int epochs = 50;
  int recursion_depth = 20;  // K
  Variant variant = Variant::RDSR;
  uint64_t seed = 0;
  bool use_pocs = true;
  std::string checkpoint_path;  // per-epoch checkpoint target; empty = none
};

inline void validate_config(const TrainConfig& cfg) {
  if (cfg.qf_pocs < 1 || cfg.qf_pocs > 100) throw ConfigError("qf must be in [1, 100]");
  if (cfg.lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (cfg.batch < 1) throw ConfigError("batch size must be >= 1");
  if (cfg.epochs < 0) throw ConfigError("epoch count must be >= 0");
  if (cfg.recursion_depth < 1) throw ConfigError("recursion depth must be >= 1");
}

// Builds (target, x0, lambda) for one training patch at the given QF.
inline TrainExample make_example(const Image& patch, int qf) {
  if (patch.width % kBlockSize != 0 || patch.height % kBlockSize != 0) {
    throw ShapeError("make_example: patch dimensions must be block multiples");
  }
  const QuantTable table = scale_quant_table(base_quant_table(), qf);
  TrainExample ex;
  ex.target = pad_to_blocks(patch);
  const CoeffGrid grid = forward_grid(ex.target, table);
  ex.lambda = magnitude_field(grid, table);
  ex.x0 = initial_image(grid, table);
  return ex;
}

// Squared-error objective L = sum over pixels of (target - psi(x0))^2 and its
// parameter gradients (grad_out = -2 (target - psi(x0))).
inline std::pair<double, ParamGrads> loss(const ModelParams& params,
                                          const TrainExample& ex) {
  PsiTape tape;
  const PaddedImage y = psi_forward(ex.x0, params, ex.lambda, &tape);
  PaddedImage grad_out(y.width, y.height, y.original_width, y.original_height);
  double total = 0.0;
  for (size_t i = 0; i < y.samples.size(); ++i) {
    const double diff = ex.target.samples[i] - y.samples[i];
    total += diff * diff;
    grad_out.samples[i] = -2.0 * diff;
  }
  if (!std::isfinite(total)) throw NumericError("non-finite loss (training diverged)");
  return {total, psi_backward(grad_out, tape, params)};
}

inline double loss_value(const ModelParams& params, const TrainExample& ex) {
  const PaddedImage y = psi_forward(ex.x0, params, ex.lambda);
  double total = 0.0;
  for (size_t i = 0; i < y.samples.size(); ++i) {
    const double diff = ex.target.samples[i] - y.samples[i];
    total += diff * diff;
  }
  if (!std::isfinite(total)) throw NumericError("non-finite loss");
  return total;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  struct LayerMoments {
    std::vector<double> mw, vw, mb, vb;
  };
  struct StageMoments {
    LayerMoments c1, c2, c3;
  };
  std::vector<StageMoments> stages;
  int64_t step = 0;

  static AdamState zeros_like(const ModelParams& p) {
    AdamState s;
    s.stages.resize(p.stages.size());
    for (size_t i = 0; i < p.stages.size(); ++i) {
      auto init = [](AdamState::LayerMoments& m, const ConvLayer& l) {
        m.mw.assign(l.weight.size(), 0.0);
        m.vw.assign(l.weight.size(), 0.0);
        m.mb.assign(l.bias.size(), 0.0);
        m.vb.assign(l.bias.size(), 0.0);
      };
      init(s.stages[i].c1, p.stages[i].conv1);
      init(s.stages[i].c2, p.stages[i].conv2);
      init(s.stages[i].c3, p.stages[i].conv3);
    }
    return s;
  }
};

namespace detail {

inline void adam_update(std::vector<float>& param, const std::vector<double>& grad,
                        std::vector<double>& m, std::vector<double>& v, double lr,
                        double beta1, double beta2, double eps, double bc1,
                        double bc2) {
  for (size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] = static_cast<float>(double(param[i]) - lr * mhat / (std::sqrt(vhat) + eps));
  }
}

}  // namespace detail

// One Adam step with bias correction. Moments and the update are computed in
// double; parameters are rounded to their float32 storage once per step.
inline void adam_step(ModelParams& params, const ParamGrads& grads, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  if (state.stages.size() != params.stages.size() ||
      grads.stages.size() != params.stages.size()) {
    throw ConfigError("adam_step: state/grads do not match params");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(beta2, double(state.step));
  for (size_t i = 0; i < params.stages.size(); ++i) {
    Stage& s = params.stages[i];
    const StageGrads& g = grads.stages[i];
    AdamState::StageMoments& m = state.stages[i];
    detail::adam_update(s.conv1.weight, g.conv1.weight, m.c1.mw, m.c1.vw, lr, beta1, beta2, eps, bc1, bc2);
    detail::adam_update(s.conv1.bias, g.conv1.bias, m.c1.mb, m.c1.vb, lr, beta1, beta2, eps, bc1, bc2);
    detail::adam_update(s.conv2.weight, g.conv2.weight, m.c2.mw, m.c2.vw, lr, beta1, beta2, eps, bc1, bc2);
    detail::adam_update(s.conv2.bias, g.conv2.bias, m.c2.mb, m.c2.vb, lr, beta1, beta2, eps, bc1, bc2);
    detail::adam_update(s.conv3.weight, g.conv3.weight, m.c3.mw, m.c3.vw, lr, beta1, beta2, eps, bc1, bc2);
    detail::adam_update(s.conv3.bias, g.conv3.bias, m.c3.mb, m.c3.vb, lr, beta1, beta2, eps, bc1, bc2);
  }
}

// ---------------------------------------------------------------------------
// Training loop

using ProgressSink = std::function<void(int epoch, double mean_loss)>;

// Minimizes the squared-error objective over the dataset with Adam. Batches
// use the arithmetic-mean gradient with a fixed accumulation order, and each
// epoch reshuffles with a dedicated seeded stream, so the returned parameters
// are a pure function of (dataset, config).
inline ModelParams train(const std::vector<Image>& dataset, const TrainConfig& cfg,
                         const ProgressSink& progress = nullptr) {
  validate_config(cfg);
  if (dataset.empty()) throw ConfigError("train: empty dataset");

  ModelParams params = init_params(cfg.variant, cfg.recursion_depth, cfg.seed);
  params.use_pocs = cfg.use_pocs;
  AdamState state = AdamState::zeros_like(params);
  Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t(0));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;

    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
      const size_t stop = std::min(order.size(), start + size_t(cfg.batch));
      const int n_items = int(stop - start);
      const size_t slots = size_t(n_items);

      // Batch items run data-parallel; each item's gradients land in their
      // own slot and are reduced in item order below, so the result does not
      // depend on the worker count.
      std::vector<double> item_losses(slots, 0.0);
      std::vector<ParamGrads> item_grads(slots);
      std::vector<std::exception_ptr> item_errors(slots);
      parallel_for(n_items, [&](int i) {
        try {
          const TrainExample ex =
              make_example(dataset[order[start + size_t(i)]], cfg.qf_pocs);
          auto [item_loss, grads] = loss(params, ex);
          item_losses[size_t(i)] = item_loss;
          item_grads[size_t(i)] = std::move(grads);
        } catch (...) {
          item_errors[size_t(i)] = std::current_exception();
        }
      });
      for (const std::exception_ptr& e : item_errors) {
        if (e) std::rethrow_exception(e);
      }

      ParamGrads mean_grads = ParamGrads::zeros_like(params);
      double batch_loss = 0.0;
      const double scale = 1.0 / double(n_items);
      for (int i = 0; i < n_items; ++i) {
        batch_loss += item_losses[size_t(i)];
        mean_grads.add_scaled(item_grads[size_t(i)], scale);
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch));
      }
      adam_step(params, mean_grads, state, cfg.lr);
      epoch_loss += batch_loss;
    }

    const double mean_loss = epoch_loss / double(order.size());
    if (!std::isfinite(mean_loss)) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch));
    }
    if (progress) progress(epoch, mean_loss);
    if (!cfg.checkpoint_path.empty()) save_checkpoint(params, cfg.checkpoint_path);
  }
  return params;
}

}  // namespace dsr
