// Smallest end-to-end use of the library: generate a few Darcy samples, train
// an FNO+diff model for a handful of epochs, and evaluate it at 32x32 and at
// 64x64 without retraining.

#include <cstdio>

#include "localno/run.hpp"

using namespace localno;

int main() {
  const auto train = gen_darcy_dataset(make_unit_square(32), 64, split_seed(0, "train"));
  const auto test = gen_darcy_dataset(make_unit_square(32), 16, split_seed(0, "test"), "test");

  auto settings = resolve_train_settings({{"differential", true}, {"modes", 8}, {"epochs", 5}, {"batch", 8}});
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochRecord& r, const LocalNOModel&) {
    std::printf("epoch %zu  train loss %.4g  test rel L2 %.4g\n", r.epoch, r.train_loss, r.val_rel_l2);
  };
  const auto res = train_on_dataset(settings, train, &test, hooks);

  std::printf("parameters: %zu\n", count_params(res.model));
  std::printf("test rel L2 at 32x32: %.4g\n", evaluate_on_dataset(res.model, test).rel_l2);
  std::printf("test rel L2 at 64x64: %.4g\n", evaluate_on_dataset(res.model, regenerate_darcy(test, 64)).rel_l2);
  return 0;
}
