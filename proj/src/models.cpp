#include "diffrecon/models.hpp"

#include <cmath>

namespace diffrecon {

namespace nn = torch::nn;

// --- ConvBlock ---------------------------------------------------------

ConvBlockImpl::ConvBlockImpl(int in_ch, int out_ch, int time_dim) {
  norm = register_module("norm", nn::GroupNorm(nn::GroupNormOptions(1, in_ch)));
  conv = register_module(
      "conv", nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, 3).padding(1)));
  if (time_dim > 0) {
    time1 = register_module("time1", nn::Linear(time_dim, time_dim));
    time2 = register_module("time2", nn::Linear(time_dim, out_ch));
  }
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x,
                                     const torch::Tensor& temb) {
  auto h = conv(norm(x));
  if (time1) {
    auto bias = time2(torch::silu(time1(temb)));
    h = h + bias.unsqueeze(-1).unsqueeze(-1);
  }
  return torch::silu(h);
}

// --- UNetNoisePredictor -----------------------------------------------

UNetNoisePredictorImpl::UNetNoisePredictorImpl(UNetOptions o) : opts(o) {
  const int w = opts.base_width;
  const int td = opts.time_dim;
  TORCH_CHECK(opts.resolved_canvas() % 8 == 0, "canvas must be divisible by 8");
  TORCH_CHECK(opts.resolved_canvas() >= opts.in_size,
              "canvas smaller than input");

  entry = register_module(
      "entry", nn::Conv2d(nn::Conv2dOptions(1, w, 3).padding(1)));

  enc1 = register_module("enc1", ConvBlock(w, w, td));
  down1 = register_module(
      "down1", nn::Conv2d(nn::Conv2dOptions(w, 2 * w, 3).stride(2).padding(1)));
  enc2 = register_module("enc2", ConvBlock(2 * w, 2 * w, td));
  down2 = register_module(
      "down2",
      nn::Conv2d(nn::Conv2dOptions(2 * w, 4 * w, 3).stride(2).padding(1)));
  enc3 = register_module("enc3", ConvBlock(4 * w, 4 * w, td));
  down3 = register_module(
      "down3",
      nn::Conv2d(nn::Conv2dOptions(4 * w, 8 * w, 3).stride(2).padding(1)));

  mid1 = register_module("mid1", ConvBlock(8 * w, 8 * w, 0));
  mid2 = register_module("mid2", ConvBlock(8 * w, 8 * w, 0));
  mid3 = register_module("mid3", ConvBlock(8 * w, 8 * w, 0));

  up1 = register_module(
      "up1", nn::ConvTranspose2d(
                 nn::ConvTranspose2dOptions(8 * w, 4 * w, 2).stride(2)));
  dec1 = register_module("dec1", ConvBlock(8 * w, 4 * w, td));
  up2 = register_module(
      "up2", nn::ConvTranspose2d(
                 nn::ConvTranspose2dOptions(4 * w, 2 * w, 2).stride(2)));
  dec2 = register_module("dec2", ConvBlock(4 * w, 2 * w, td));
  up3 = register_module(
      "up3",
      nn::ConvTranspose2d(nn::ConvTranspose2dOptions(2 * w, w, 2).stride(2)));
  dec3 = register_module("dec3", ConvBlock(2 * w, w, td));

  exit_conv = register_module(
      "exit", nn::Conv2d(nn::Conv2dOptions(w, 1, 3).padding(1)));
}

torch::Tensor UNetNoisePredictorImpl::time_embedding(
    const torch::Tensor& t) const {
  const int half = opts.time_dim / 2;
  auto opts_f = torch::TensorOptions()
                    .dtype(entry->weight.dtype())
                    .device(t.device());
  auto freqs = torch::exp(torch::arange(half, opts_f) *
                          (-std::log(10000.0) / half));
  auto args = t.to(opts_f.dtype()).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

torch::Tensor UNetNoisePredictorImpl::forward(const torch::Tensor& x,
                                              const torch::Tensor& t) {
  TORCH_CHECK(x.dim() == 4 && x.size(1) == 1, "expected [B,1,H,W] input");
  TORCH_CHECK(x.size(2) == opts.in_size && x.size(3) == opts.in_size,
              "input size mismatch: got ", x.size(2), "x", x.size(3),
              ", model built for ", opts.in_size);
  const int canvas = opts.resolved_canvas();
  const int pad_lo = (canvas - opts.in_size) / 2;
  const int pad_hi = canvas - opts.in_size - pad_lo;

  auto h = x;
  if (pad_lo + pad_hi > 0)
    h = torch::constant_pad_nd(h, {pad_lo, pad_hi, pad_lo, pad_hi}, 0.0);

  auto temb = time_embedding(t);

  h = entry(h);
  auto s1 = enc1(h, temb);
  auto s2 = enc2(down1(s1), temb);
  auto s3 = enc3(down2(s2), temb);

  auto m = down3(s3);
  m = mid1(m, temb);
  m = mid2(m, temb);
  m = mid3(m, temb);

  auto d = dec1(torch::cat({up1(m), s3}, 1), temb);
  d = dec2(torch::cat({up2(d), s2}, 1), temb);
  d = dec3(torch::cat({up3(d), s1}, 1), temb);

  auto out = exit_conv(d);
  if (pad_lo + pad_hi > 0)
    out = out.slice(2, pad_lo, pad_lo + opts.in_size)
              .slice(3, pad_lo, pad_lo + opts.in_size);
  return out;
}

// --- classifiers -----------------------------------------------------------

ClassifierAImpl::ClassifierAImpl() {
  conv1 = register_module(
      "conv1", nn::Conv2d(nn::Conv2dOptions(1, 64, 5).stride(2)));
  conv2 = register_module(
      "conv2", nn::Conv2d(nn::Conv2dOptions(64, 64, 5).stride(1)));
  drop1 = register_module("drop1", nn::Dropout(0.25));
  fc1 = register_module("fc1", nn::Linear(64 * 8 * 8, 128));
  drop2 = register_module("drop2", nn::Dropout(0.5));
  fc2 = register_module("fc2", nn::Linear(128, 10));
}

torch::Tensor ClassifierAImpl::forward(const torch::Tensor& x) {
  auto h = torch::relu(conv1(x));
  h = torch::relu(conv2(h));
  h = drop1(h);
  h = h.flatten(1);
  h = torch::relu(fc1(h));
  h = drop2(h);
  return fc2(h);
}

ClassifierBImpl::ClassifierBImpl() {
  drop0 = register_module("drop0", nn::Dropout(0.2));
  conv1 = register_module(
      "conv1", nn::Conv2d(nn::Conv2dOptions(1, 64, 8).stride(2).padding(3)));
  conv2 = register_module(
      "conv2", nn::Conv2d(nn::Conv2dOptions(64, 128, 6).stride(2)));
  conv3 = register_module(
      "conv3", nn::Conv2d(nn::Conv2dOptions(128, 128, 5).stride(1)));
  drop1 = register_module("drop1", nn::Dropout(0.5));
  fc = register_module("fc", nn::Linear(128, 10));
}

torch::Tensor ClassifierBImpl::forward(const torch::Tensor& x) {
  auto h = drop0(x);
  h = torch::relu(conv1(h));
  h = torch::relu(conv2(h));
  h = torch::relu(conv3(h));
  h = drop1(h);
  h = h.flatten(1);
  return fc(h);
}

// --- generic handle ----------------------------------------------------

ClassifierFn make_classifier_fn(ClassifierA net) {
  return ClassifierFn([net](const torch::Tensor& x, bool train_mode) mutable {
    return classify(net, x, train_mode);
  });
}

ClassifierFn make_classifier_fn(ClassifierB net) {
  return ClassifierFn([net](const torch::Tensor& x, bool train_mode) mutable {
    return classify(net, x, train_mode);
  });
}

torch::Tensor predict_labels(const ClassifierFn& clf, const torch::Tensor& x,
                             std::int64_t batch) {
  torch::NoGradGuard ng;
  std::vector<torch::Tensor> preds;
  for (std::int64_t i = 0; i < x.size(0); i += batch) {
    auto chunk = x.narrow(0, i, std::min(batch, x.size(0) - i));
    preds.push_back(clf.logits(chunk, false).argmax(1));
  }
  return torch::cat(preds);
}

double accuracy_percent(const ClassifierFn& clf, const torch::Tensor& x,
                        const torch::Tensor& labels, std::int64_t batch) {
  auto pred = predict_labels(clf, x, batch);
  return 100.0 * pred.eq(labels).to(torch::kFloat64).mean().item<double>();
}

}  // namespace diffrecon
