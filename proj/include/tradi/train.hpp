#pragma once

#include "tradi/common.hpp"
#include "tradi/data_io.hpp"
#include "tradi/nn.hpp"
#include "tradi/tracker.hpp"

#include <optional>
#include <vector>

namespace tradi::train {

struct TrainOptions {
  double lr = 0.1;
  int epochs = 40;
  int batch_size = 128;
  std::uint64_t seed = 0;
  bool track = true;              // filter updates are passive w.r.t. SGD
  tracker::TrackerHyper hyper;
  bool track_cov = false;         // exact per-layer covariance (tiny nets)
  int cov_limit = 100;
  int thin = 1;                   // filter update every `thin` mini-batches
  int phase1_epochs = -1;         // regression MSE phase; -1 = half of epochs
  double phase2_lr = -1.0;        // fine-tune rate for the NLL phase; <=0 = lr
  double bn_momentum = 0.1;
};

struct TrainResult {
  nn::Network net;
  nn::ParamVector params;
  tracker::TrackerState state;
  std::optional<tracker::LayerCovariance> cov;
  double wall_seconds = 0.0;
  double cpu_seconds = 0.0;
  std::vector<double> epoch_loss;
};

// Plain SGD on the cross-entropy loss with per-step tracking.
TrainResult train_classifier(const std::vector<nn::LayerSpec>& specs, const data::Dataset& ds,
                             const TrainOptions& opts);

// Two-stage regression: MSE on the single-output network first, then the
// variance head is added (fresh init) and training continues on the Gaussian
// NLL. Tracker state is carried across the widening; new weights start from
// their init distribution.
TrainResult train_regressor(const std::vector<nn::LayerSpec>& specs, const data::Dataset& ds,
                            const TrainOptions& opts);

// Carries tracked state onto a widened parameter vector: copied entries keep
// their filtered mean/variance, fresh entries start from the prior.
tracker::TrackerState remap_state(const tracker::TrackerState& old,
                                  const std::vector<std::ptrdiff_t>& source_index,
                                  const Vector& init_variance);

tracker::LayerCovariance remap_cov(const tracker::LayerCovariance& old,
                                   const std::vector<std::ptrdiff_t>& source_index,
                                   const Vector& init_variance,
                                   const std::vector<nn::ParamSlice>& new_layout, int limit);

}  // namespace tradi::train
