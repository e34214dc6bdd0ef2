#include "diffrecon/diffusion.hpp"

#include <cmath>

#include "diffrecon/util.hpp"

namespace diffrecon {

NoiseSchedule NoiseSchedule::linear(std::int64_t t_train, double beta_start,
                                    double beta_end) {
  TORCH_CHECK(t_train >= 1, "t_train must be >= 1");
  NoiseSchedule s;
  s.t_train = t_train;
  s.beta.resize(t_train);
  s.alpha.resize(t_train);
  s.alpha_bar.resize(t_train);
  s.sigma.resize(t_train);
  double bar = 1.0;
  for (std::int64_t i = 0; i < t_train; ++i) {
    double frac = t_train == 1 ? 0.0 : double(i) / double(t_train - 1);
    s.beta[i] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[i] = 1.0 - s.beta[i];
    bar *= s.alpha[i];
    s.alpha_bar[i] = bar;
    s.sigma[i] = std::sqrt(s.beta[i]);
  }
  s.validate();
  return s;
}

void NoiseSchedule::validate() const {
  TORCH_CHECK(t_train >= 1 && std::int64_t(beta.size()) == t_train,
              "schedule length mismatch");
  double prev_bar = 1.0;
  for (std::int64_t i = 0; i < t_train; ++i) {
    if (!(beta[i] > 0.0 && beta[i] < 1.0))
      throw CorruptionError("beta outside (0,1) at t=" + std::to_string(i + 1));
    if (!std::isfinite(alpha_bar[i]) || !(alpha_bar[i] < prev_bar))
      throw CorruptionError("alpha_bar not strictly decreasing at t=" +
                            std::to_string(i + 1));
    prev_bar = alpha_bar[i];
  }
}

double NoiseSchedule::alpha_bar_at(std::int64_t t) const {
  TORCH_CHECK(t >= 0 && t <= t_train, "t outside schedule");
  return t == 0 ? 1.0 : alpha_bar[t - 1];
}

ChainSteps NoiseSchedule::full_chain() const {
  ChainSteps c;
  c.timesteps.resize(t_train);
  for (std::int64_t i = 0; i < t_train; ++i) c.timesteps[i] = i + 1;
  c.beta = beta;
  c.alpha = alpha;
  c.alpha_bar = alpha_bar;
  c.sigma = sigma;
  return c;
}

ChainSteps respace(const NoiseSchedule& schedule, std::int64_t t_star) {
  if (t_star < 1 || t_star > schedule.t_train)
    throw ConfigError("t_star " + std::to_string(t_star) +
                      " outside [1, " + std::to_string(schedule.t_train) + "]");
  if (t_star == schedule.t_train) return schedule.full_chain();

  ChainSteps c;
  c.timesteps.resize(t_star);
  c.beta.resize(t_star);
  c.alpha.resize(t_star);
  c.alpha_bar.resize(t_star);
  c.sigma.resize(t_star);
  std::int64_t prev_t = 0;
  for (std::int64_t j = 1; j <= t_star; ++j) {
    auto t = std::llround(double(j) * double(schedule.t_train) / double(t_star));
    TORCH_CHECK(t > prev_t && t <= schedule.t_train,
                "respaced timesteps must be strictly increasing");
    double bar = schedule.alpha_bar_at(t);
    double bar_prev = schedule.alpha_bar_at(prev_t);
    c.timesteps[j - 1] = t;
    c.alpha_bar[j - 1] = bar;
    c.alpha[j - 1] = bar / bar_prev;
    c.beta[j - 1] = 1.0 - c.alpha[j - 1];
    c.sigma[j - 1] = std::sqrt(c.beta[j - 1]);
    prev_t = t;
  }
  return c;
}

torch::Tensor forward_diffuse(const torch::Tensor& x0, double alpha_bar_t,
                              const torch::Tensor& noise) {
  TORCH_CHECK(noise.sizes() == x0.sizes(), "noise shape must match x0");
  return std::sqrt(alpha_bar_t) * x0 + std::sqrt(1.0 - alpha_bar_t) * noise;
}

torch::Tensor reverse_step(UNetNoisePredictor& predictor,
                           const torch::Tensor& z_t, std::int64_t timestep,
                           double alpha_t, double alpha_bar_t, double sigma_t,
                           const torch::Tensor& noise) {
  auto t = torch::full({z_t.size(0)}, timestep,
                       torch::TensorOptions().dtype(torch::kInt64));
  auto eps = predictor->forward(z_t, t);
  auto mean = (z_t - ((1.0 - alpha_t) / std::sqrt(1.0 - alpha_bar_t)) * eps) /
              std::sqrt(alpha_t);
  if (noise.defined()) return mean + sigma_t * noise;
  return mean;
}

NoiseSource gaussian_noise(at::Generator gen) {
  return [gen](std::int64_t, const torch::Tensor& like) mutable {
    return torch::randn(like.sizes(), gen, like.options());
  };
}

torch::Tensor sample_chain(UNetNoisePredictor& predictor,
                           const ChainSteps& steps, const torch::Tensor& z_T,
                           const NoiseSource& noise, bool differentiable) {
  TORCH_CHECK(steps.length() >= 1, "chain needs at least one step");
  c10::optional<torch::NoGradGuard> ng;
  if (!differentiable) ng.emplace();

  auto z = z_T;
  for (std::int64_t j = steps.length(); j >= 1; --j) {
    torch::Tensor n;
    if (j > 1) n = noise(j, z);  // terminal step is deterministic
    z = reverse_step(predictor, z, steps.timesteps[j - 1], steps.alpha[j - 1],
                     steps.alpha_bar[j - 1], steps.sigma[j - 1], n);
  }
  return z;
}

std::vector<double> train_ddpm(DiffusionModel& model, const ImageBatch& train,
                               const DdpmTrainOptions& opts) {
  TORCH_CHECK(train.size() > 0, "empty training set");
  auto& net = model.predictor;
  net->train(true);
  torch::optim::Adam optim(net->parameters(), torch::optim::AdamOptions(opts.lr));

  auto gen = at::detail::createCPUGenerator(mix_seed(opts.seed, 0x0ddf));
  auto bar = torch::tensor(model.schedule.alpha_bar,
                           torch::TensorOptions().dtype(torch::kFloat32));

  std::vector<double> epoch_losses;
  std::int64_t step = 0;
  for (std::int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::int64_t seen = 0;
    auto batches =
        epoch_batches(train.size(), opts.batch_size, mix_seed(opts.seed, epoch));
    for (const auto& idx : batches) {
      auto x0 = train.pixels.index_select(0, idx);
      auto b = x0.size(0);
      auto t = torch::randint(1, model.schedule.t_train + 1, {b}, gen,
                              torch::kInt64);
      auto noise = torch::randn(x0.sizes(), gen, x0.options());
      auto bar_t = bar.index_select(0, t - 1).view({b, 1, 1, 1});
      auto x_t = torch::sqrt(bar_t) * x0 + torch::sqrt(1.0 - bar_t) * noise;

      optim.zero_grad();
      auto pred = net->forward(x_t, t);
      auto loss = torch::mse_loss(pred, noise);
      loss.backward();
      optim.step();

      double l = loss.item<double>();
      if (!std::isfinite(l))
        throw Error("ddpm training diverged: non-finite loss at step " +
                    std::to_string(step));
      loss_sum += l * double(b);
      seen += b;
      if (opts.on_step) opts.on_step(step, l);
      ++step;
    }
    epoch_losses.push_back(loss_sum / double(seen));
    if (opts.on_epoch) opts.on_epoch(epoch, epoch_losses.back());
  }
  net->train(false);
  return epoch_losses;
}

}  // namespace diffrecon
