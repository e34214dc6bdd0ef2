#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <vector>

#include "diffrecon/dataio.hpp"
#include "diffrecon/models.hpp"

namespace diffrecon {

/// Per-step constants of a (possibly respaced) diffusion chain, ordered by
/// ascending timestep. `timesteps[i]` is the 1-based index into the training
/// schedule used to condition the noise predictor.
struct ChainSteps {
  std::vector<std::int64_t> timesteps;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;

  std::int64_t length() const {
    return static_cast<std::int64_t>(timesteps.size());
  }
};

/// Training noise schedule: beta_t in (0,1) for t = 1..T, with
/// alpha_t = 1 - beta_t, alpha_bar_t = prod alpha_s, sigma_t = sqrt(beta_t).
/// Vectors are 0-indexed (index i holds step t = i+1).
struct NoiseSchedule {
  std::int64_t t_train = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;

  static NoiseSchedule linear(std::int64_t t_train, double beta_start = 1e-4,
                              double beta_end = 0.02);

  void validate() const;

  double alpha_bar_at(std::int64_t t) const;  // t in 1..T; alpha_bar(0) = 1

  /// Full schedule as chain steps (identity respacing).
  ChainSteps full_chain() const;
};

/// Uniformly respace to t_star steps over [1, T]: timesteps
/// round(j*T/t_star) for j = 1..t_star (strictly increasing, ends at T),
/// with per-step constants recomputed from consecutive alpha_bar ratios.
/// t_star == T returns the original per-step constants exactly.
ChainSteps respace(const NoiseSchedule& schedule, std::int64_t t_star);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise.
torch::Tensor forward_diffuse(const torch::Tensor& x0, double alpha_bar_t,
                              const torch::Tensor& noise);

struct DiffusionModel {
  UNetNoisePredictor predictor{nullptr};
  NoiseSchedule schedule;
};

/// One reverse (ancestral) step:
///   z_{t-1} = (z_t - ((1-alpha_t)/sqrt(1-alpha_bar_t)) eps(z_t, t))
///             / sqrt(alpha_t) + sigma_t * noise
/// `noise` may be undefined for the deterministic form.
torch::Tensor reverse_step(UNetNoisePredictor& predictor,
                           const torch::Tensor& z_t, std::int64_t timestep,
                           double alpha_t, double alpha_bar_t, double sigma_t,
                           const torch::Tensor& noise = {});

/// Per-step chain noise: position is the 1-based step index counted from the
/// end of the chain (position 1 produces z_0). Return an undefined tensor
/// for a deterministic step. The final step never receives noise.
using NoiseSource =
    std::function<torch::Tensor(std::int64_t position, const torch::Tensor& like)>;

inline NoiseSource zero_noise() {
  return [](std::int64_t, const torch::Tensor&) { return torch::Tensor(); };
}

/// Gaussian chain noise from one generator (draw order: high position down
/// to 2; the final step is deterministic).
NoiseSource gaussian_noise(at::Generator gen);

/// Run the reverse chain from z_T over `steps` (descending positions).
/// With `differentiable`, the graph from z_T to the output is retained.
torch::Tensor sample_chain(UNetNoisePredictor& predictor,
                           const ChainSteps& steps, const torch::Tensor& z_T,
                           const NoiseSource& noise,
                           bool differentiable = false);

struct DdpmTrainOptions {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 128;
  double lr = 2e-4;
  std::uint64_t seed = 0;
  std::function<void(std::int64_t epoch, double loss)> on_epoch;
  std::function<void(std::int64_t step, double loss)> on_step;
};

/// Minimize MSE between true noise and the predicted noise at uniformly
/// sampled timesteps. Returns the per-epoch mean losses. Throws on a
/// non-finite loss.
std::vector<double> train_ddpm(DiffusionModel& model, const ImageBatch& train,
                               const DdpmTrainOptions& opts);

}  // namespace diffrecon
