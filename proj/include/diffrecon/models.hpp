#pragma once

#include <torch/torch.h>

#include <atomic>
#include <functional>
#include <memory>

namespace diffrecon {

// --- U-Net noise predictor ---------------------------------------------

struct UNetOptions {
  int base_width = 64;   // channels after the entry convolution
  int in_size = 28;      // input height = width
  int time_dim = 128;    // sinusoidal embedding size
  // Working canvas; inputs are zero-padded to canvas x canvas at entry and
  // center-cropped back at exit. Must be a multiple of 8 (three stride-2
  // downsamplings). 0 = smallest multiple of 8 >= in_size.
  int canvas = 0;

  int resolved_canvas() const {
    if (canvas > 0) return canvas;
    return ((in_size + 7) / 8) * 8;
  }
};

/// Norm -> 3x3 conv -> (+ time bias) -> SiLU. The normalization is a layer
/// norm over (C,H,W) with per-channel affine parameters. The time adapter is
/// two linear maps with SiLU between, producing a per-channel bias.
struct ConvBlockImpl : torch::nn::Module {
  ConvBlockImpl(int in_ch, int out_ch, int time_dim /*0 = no time input*/);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

  torch::nn::GroupNorm norm{nullptr};
  torch::nn::Conv2d conv{nullptr};
  torch::nn::Linear time1{nullptr}, time2{nullptr};
};
TORCH_MODULE(ConvBlock);

/// Noise prediction network: 3-stage contracting path (channels doubled at
/// each stride-2 downsampling), 3-block bottleneck, 3-stage expansive path
/// with transpose-convolution upsampling and skip concatenation. Output has
/// the same shape as the input.
struct UNetNoisePredictorImpl : torch::nn::Module {
  explicit UNetNoisePredictorImpl(UNetOptions opts = {});

  /// x: [B,1,H,W] pixels, t: [B] int64 timestep indices (1-based).
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& t);

  torch::Tensor time_embedding(const torch::Tensor& t) const;

  UNetOptions opts;
  torch::nn::Conv2d entry{nullptr}, exit_conv{nullptr};
  ConvBlock enc1{nullptr}, enc2{nullptr}, enc3{nullptr};
  torch::nn::Conv2d down1{nullptr}, down2{nullptr}, down3{nullptr};
  ConvBlock mid1{nullptr}, mid2{nullptr}, mid3{nullptr};
  torch::nn::ConvTranspose2d up1{nullptr}, up2{nullptr}, up3{nullptr};
  ConvBlock dec1{nullptr}, dec2{nullptr}, dec3{nullptr};
};
TORCH_MODULE(UNetNoisePredictor);

// --- classifiers -----------------------------------------------------------

/// Target classifier: two 5x5/64 convolutions (stride 2 then 1), ReLU,
/// dropout 0.25, linear 128, dropout 0.5, linear 10.
struct ClassifierAImpl : torch::nn::Module {
  ClassifierAImpl();
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::Dropout drop1{nullptr}, drop2{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(ClassifierA);

/// Substitute classifier: dropout 0.2, convolutions 8x8/s2, 6x6/s2, 5x5/s1
/// (64, 128, 128 channels), dropout 0.5, linear 10.
struct ClassifierBImpl : torch::nn::Module {
  ClassifierBImpl();
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Dropout drop0{nullptr}, drop1{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(ClassifierB);

// --- generic classifier handle ----------------------------------------

/// Type-erased classifier for attack and evaluation code. `train_mode`
/// selects the stochastic forward (dropout active); eval mode is
/// deterministic. Counts invocations made with autograd enabled so
/// black-box contracts can be audited.
class ClassifierFn {
 public:
  using Fn = std::function<torch::Tensor(const torch::Tensor&, bool)>;

  ClassifierFn() = default;
  explicit ClassifierFn(Fn fn)
      : fn_(std::move(fn)),
        grad_calls_(std::make_shared<std::atomic<std::int64_t>>(0)) {}

  torch::Tensor logits(const torch::Tensor& x, bool train_mode = false) const {
    if (torch::GradMode::is_enabled()) ++*grad_calls_;
    return fn_(x, train_mode);
  }

  std::int64_t grad_mode_calls() const { return grad_calls_->load(); }
  void reset_grad_mode_calls() const { grad_calls_->store(0); }

 private:
  Fn fn_;
  std::shared_ptr<std::atomic<std::int64_t>> grad_calls_;
};

ClassifierFn make_classifier_fn(ClassifierA net);
ClassifierFn make_classifier_fn(ClassifierB net);

/// Logits with dropout forced to the requested mode; restores the module's
/// previous mode afterwards.
template <typename Net>
torch::Tensor classify(Net& net, const torch::Tensor& x, bool train_mode) {
  bool was = net->is_training();
  net->train(train_mode);
  auto out = net->forward(x);
  net->train(was);
  return out;
}

/// Predicted labels (argmax of eval-mode logits).
torch::Tensor predict_labels(const ClassifierFn& clf, const torch::Tensor& x,
                             std::int64_t batch = 512);

/// Fraction of samples classified as `labels`, in percent.
double accuracy_percent(const ClassifierFn& clf, const torch::Tensor& x,
                        const torch::Tensor& labels, std::int64_t batch = 512);

}  // namespace diffrecon
