// Temporary development driver used while the full CLI is under
// construction: micro-benchmarks and headless training runs.
#include <torch/torch.h>

#include <CLI11.hpp>
#include <cstdio>

#include "diffrecon/checkpoint.hpp"
#include "diffrecon/dataio.hpp"
#include "diffrecon/diffusion.hpp"
#include "diffrecon/models.hpp"
#include "diffrecon/util.hpp"

using namespace diffrecon;

static void bench_unet(int width, int batch) {
  UNetNoisePredictor net{UNetOptions{.base_width = width}};
  auto x = torch::randn({batch, 1, 28, 28});
  auto t = torch::randint(1, 1000, {batch}, torch::kInt64);
  // warmup
  net->forward(x, t);
  Timer fw;
  int iters = 5;
  for (int i = 0; i < iters; ++i) {
    torch::NoGradGuard ng;
    net->forward(x, t);
  }
  double f = fw.seconds() / iters;
  Timer bw;
  for (int i = 0; i < iters; ++i) {
    auto xr = x.clone().requires_grad_(true);
    auto y = net->forward(xr, t).pow(2).sum();
    y.backward();
  }
  double b = bw.seconds() / iters;
  std::printf("width=%d batch=%d fwd=%.4fs (%.2f ms/img) fwd+bwd=%.4fs (%.2f ms/img)\n",
              width, batch, f, 1e3 * f / batch, b, 1e3 * b / batch);
}

int main(int argc, char** argv) {
  CLI::App app{"diffrecon development tool"};
  app.require_subcommand(1);

  auto* bench = app.add_subcommand("bench", "U-Net throughput probe");
  int bwidth = 16, bbatch = 64;
  bench->add_option("--width", bwidth);
  bench->add_option("--batch", bbatch);

  auto* tddpm = app.add_subcommand("train-ddpm", "train the noise predictor");
  std::string data_dir = "/root/data/mnist", out = "ddpm.ckpt", dataset = "mnist";
  int width = 16, epochs = 8, batch = 128, t_train = 1000;
  double lr = 2e-4;
  std::int64_t limit = 0;
  std::uint64_t seed = 1;
  tddpm->add_option("--data", data_dir);
  tddpm->add_option("--dataset", dataset);
  tddpm->add_option("--out", out);
  tddpm->add_option("--width", width);
  tddpm->add_option("--epochs", epochs);
  tddpm->add_option("--batch", batch);
  tddpm->add_option("--lr", lr);
  tddpm->add_option("--limit", limit);
  tddpm->add_option("--seed", seed);

  auto* tclf = app.add_subcommand("train-clf", "train classifier A or B");
  std::string clf_arch = "a";
  std::string clf_out = "clf.ckpt";
  int clf_epochs = 12;
  double clf_lr = 1e-3;
  tclf->add_option("--data", data_dir);
  tclf->add_option("--dataset", dataset);
  tclf->add_option("--arch", clf_arch);
  tclf->add_option("--out", clf_out);
  tclf->add_option("--epochs", clf_epochs);
  tclf->add_option("--lr", clf_lr);
  tclf->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  torch::set_num_threads(2);

  if (*bench) {
    for (int w : {8, 12, 16, 24, 32}) bench_unet(w, bbatch);
    return 0;
  }

  if (*tddpm) {
    auto split = load_dataset(data_dir, dataset);
    auto train = limit > 0 ? split.train.head(limit) : split.train;
    std::printf("train %lld images, width %d, epochs %d\n",
                (long long)train.size(), width, epochs);
    torch::manual_seed(seed);
    DiffusionModel model;
    model.predictor = UNetNoisePredictor{UNetOptions{.base_width = width}};
    model.schedule = NoiseSchedule::linear(t_train);
    DdpmTrainOptions opts;
    opts.epochs = epochs;
    opts.batch_size = batch;
    opts.lr = lr;
    opts.seed = seed;
    Timer timer;
    opts.on_epoch = [&](std::int64_t e, double l) {
      std::printf("epoch %lld loss %.5f (%.1fs elapsed)\n", (long long)e, l,
                  timer.seconds());
      std::fflush(stdout);
    };
    train_ddpm(model, train, opts);
    nlohmann::json meta{{"kind", "unet"},
                        {"dataset", dataset},
                        {"base_width", width},
                        {"in_size", 28},
                        {"time_dim", 128},
                        {"t_train", t_train},
                        {"beta_start", 1e-4},
                        {"beta_end", 0.02},
                        {"seed", seed}};
    save_checkpoint(*model.predictor, meta, out);
    std::printf("saved %s\n", out.c_str());
    return 0;
  }

  if (*tclf) {
    auto split = load_dataset(data_dir, dataset);
    torch::manual_seed(seed);
    auto run = [&](auto net) {
      torch::optim::Adam optim(net->parameters(),
                               torch::optim::AdamOptions(clf_lr));
      net->train(true);
      for (int e = 0; e < clf_epochs; ++e) {
        double sum = 0;
        std::int64_t seen = 0;
        for (auto& idx :
             epoch_batches(split.train.size(), 128, mix_seed(seed, e))) {
          auto x = split.train.pixels.index_select(0, idx);
          auto y = split.train.labels.index_select(0, idx);
          optim.zero_grad();
          auto loss = torch::nn::functional::cross_entropy(net->forward(x), y);
          loss.backward();
          optim.step();
          sum += loss.template item<double>() * idx.size(0);
          seen += idx.size(0);
        }
        net->train(false);
        auto clf = make_classifier_fn(net);
        double acc =
            accuracy_percent(clf, split.test.pixels, split.test.labels);
        net->train(true);
        std::printf("epoch %d loss %.4f test acc %.2f%%\n", e, sum / seen, acc);
        std::fflush(stdout);
      }
      net->train(false);
      nlohmann::json meta{{"kind", std::string("classifier_") + clf_arch},
                          {"dataset", dataset},
                          {"seed", seed}};
      save_checkpoint(*net, meta, clf_out);
      std::printf("saved %s\n", clf_out.c_str());
    };
    if (clf_arch == "a")
      run(ClassifierA());
    else
      run(ClassifierB());
    return 0;
  }
  return 0;
}
