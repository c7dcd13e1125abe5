// cevae command line: train / enhance / encode / decode / evaluate /
// storage-report / ablate. Exit codes: 0 success, 1 runtime failure, 2 usage.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cevae/image_io.hpp"
#include "cevae/latent_codec.hpp"
#include "cevae/timer.hpp"
#include "cevae/trainer.hpp"

namespace fs = std::filesystem;
using namespace cevae;

namespace {

CevaeConfig preset_config(const std::string& name) {
  if (name == "reference") return CevaeConfig::reference();
  if (name == "tiny") return CevaeConfig::tiny();
  if (name == "small") return CevaeConfig::small();
  throw Error(ErrorKind::Config, "unknown preset '" + name + "' (valid: reference, tiny, small)");
}

int preset_size(const std::string& name) {
  if (name == "tiny") return 32;
  if (name == "small") return 64;
  return 256;
}

std::vector<fs::path> list_inputs(const std::string& input, const std::string& ext_hint) {
  if (!fs::exists(input))
    throw Error(ErrorKind::Config, "input path does not exist: " + input);
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (!ext_hint.empty()) {
      std::erase_if(files, [&](const fs::path& p) { return p.extension() != ext_hint; });
    }
  } else {
    files.push_back(input);
  }
  if (files.empty()) throw Error(ErrorKind::Input, "no input files under " + input);
  return files;
}

Tensor load_signed(const std::string& path, int size) {
  return from_unit_range(resize_bilinear(load_image(path), size, size));
}

struct ModelArgs {
  std::string checkpoint;
  std::string preset = "reference";
  uint64_t seed = 0;
  int size = 0;  // 0 = preset default

  void attach(CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint, "Checkpoint file (omit for a fresh seeded model)");
    cmd->add_option("--preset", preset, "Model geometry: reference|tiny|small");
    cmd->add_option("--seed", seed, "Parameter seed when no checkpoint is given");
    cmd->add_option("--size", size, "Square working resolution (default per preset)");
  }
  int image_size() const { return size > 0 ? size : preset_size(preset); }
  Trainer make() const {
    if (!checkpoint.empty()) return Trainer::from_checkpoint(checkpoint);
    TrainConfig tc;
    tc.seed = seed;
    return Trainer(preset_config(preset), tc);
  }
};

Shape parse_shape(const std::string& s) {
  Shape out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, 'x')) out.push_back(std::stoi(tok));
  if (out.empty()) throw Error(ErrorKind::Config, "bad shape '" + s + "' (want e.g. 3x256x256)");
  return out;
}

int cmd_train(const ModelArgs& margs, const std::string& dataset, const std::string& layout,
              const std::string& mode, const std::string& toggles_s, double lr, int steps,
              int batch, int disc_start, bool augment_on, const std::string& init,
              const std::string& out, const std::string& log_path, int eval_every) {
  TrainConfig tc;
  tc.mode = (mode == "finetune") ? TrainConfig::Mode::kFinetune : TrainConfig::Mode::kPretrain;
  tc.lr = lr;
  tc.steps = steps;
  tc.batch_size = batch;
  tc.disc_start_step = disc_start;
  tc.toggles = parse_toggles(toggles_s);
  tc.seed = margs.seed;
  tc.image_size = margs.image_size();
  tc.augment_on = augment_on;
  tc.eval_every = eval_every;
  DatasetLayout lay = (layout == "identity" || tc.mode == TrainConfig::Mode::kPretrain)
                          ? DatasetLayout::kIdentity
                          : DatasetLayout::kPairedDirs;
  if (layout == "paired") lay = DatasetLayout::kPairedDirs;
  DatasetManifest data = load_manifest(dataset, lay);
  Trainer trainer(preset_config(margs.preset), tc);
  if (!init.empty()) trainer.load_checkpoint(init);
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw Error(ErrorKind::Input, "cannot open log: " + log_path);
    trainer.log = &log;
  }
  trainer.run(data);
  trainer.save_checkpoint(out);
  std::cout << "trained " << tc.steps << " steps -> " << out << "\n";
  return 0;
}

int cmd_encode(const ModelArgs& margs, const std::string& input, const std::string& out,
               const std::string& dtype_s) {
  LatentDtype dtype = dtype_s == "f64"   ? LatentDtype::kF64
                      : dtype_s == "f32" ? LatentDtype::kF32
                      : dtype_s == "f16"
                          ? LatentDtype::kF16
                          : throw Error(ErrorKind::Config, "bad --dtype (f16|f32|f64)");
  auto files = list_inputs(input, "");
  Trainer trainer = margs.make();
  fs::create_directories(out);
  std::vector<double> times;
  int64_t total_bytes = 0;
  double total_mb = 0;
  int failures = 0;
  for (const auto& f : files) {
    try {
      Tensor img = load_signed(f.string(), margs.image_size());
      Timer t;
      Tensor latent = trainer.encode_image(img);
      times.push_back(t.seconds());
      auto bytes = serialize_latent(latent, dtype);
      fs::path dst = fs::path(out) / (f.stem().string() + ".cevl");
      std::ofstream os(dst, std::ios::binary);
      os.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
      if (!os) throw Error(ErrorKind::Input, "write failed: " + dst.string());
      std::cout << dst.string() << '\t' << bytes.size() << " bytes\n";
      total_bytes += static_cast<int64_t>(bytes.size());
      total_mb += storage_megabytes(static_cast<int64_t>(bytes.size()));
    } catch (const Error& e) {
      std::cerr << "error: " << f.string() << ": " << e.what() << "\n";
      ++failures;
    }
  }
  if (!times.empty()) {
    std::sort(times.begin(), times.end());
    double median = times[times.size() / 2];
    if (times.size() % 2 == 0) median = 0.5 * (median + times[times.size() / 2 - 1]);
    std::cout << "encoded " << times.size() << " files, total " << total_mb << " MB ("
              << total_bytes << " bytes), median encode time " << median << " s\n";
  }
  return failures ? 1 : 0;
}

int cmd_decode(const ModelArgs& margs, const std::string& latent, const std::string& out) {
  auto files = list_inputs(latent, ".cevl");
  Trainer trainer = margs.make();
  fs::create_directories(out);
  for (const auto& f : files) {
    Tensor img = trainer.enhance_latent(read_latent_file(f.string()));
    fs::path dst = fs::path(out) / (f.stem().string() + ".png");
    save_image(dst.string(), to_unit_range(img));
    std::cout << dst.string() << "\n";
  }
  return 0;
}

int cmd_enhance(const ModelArgs& margs, const std::string& input, const std::string& out) {
  auto files = list_inputs(input, "");
  Trainer trainer = margs.make();
  fs::create_directories(out);
  for (const auto& f : files) {
    Tensor img = trainer.enhance_image(load_signed(f.string(), margs.image_size()));
    fs::path dst = fs::path(out) / (f.stem().string() + ".png");
    save_image(dst.string(), to_unit_range(img));
    std::cout << dst.string() << "\n";
  }
  return 0;
}

int cmd_evaluate(const ModelArgs& margs, const std::string& dataset, const std::string& out) {
  DatasetManifest data = load_manifest(dataset, DatasetLayout::kPairedDirs);
  Trainer trainer = margs.make();
  auto result = evaluate_dataset(
      data, [&](const PairEntry& e) { return load_pair(e, margs.image_size()); },
      [&](const Tensor& img) { return trainer.enhance_image(img); }, &trainer.phi);
  std::string text = format_metrics_file(result);
  std::ofstream os(out);
  if (!os) throw Error(ErrorKind::Input, "cannot write: " + out);
  os << text;
  std::cout << text;
  return 0;
}

int cmd_storage_report(const std::string& raw_shape, const std::string& latent_shape,
                       int bytes_per_value, double bandwidth, double capacity, double rate) {
  auto report = compression_report(parse_shape(raw_shape), parse_shape(latent_shape),
                                   bytes_per_value, bandwidth, capacity, rate);
  std::cout << format_report(report);
  return 0;
}

int cmd_ablate(const ModelArgs& margs, const std::string& dataset, const std::string& eval_root,
               const std::string& sets_s, const std::string& out, double lr, int steps, int batch) {
  std::vector<LossToggles> sets;
  std::istringstream is(sets_s);
  std::string tok;
  while (std::getline(is, tok, ';'))
    if (!tok.empty()) sets.push_back(parse_toggles(tok));
  TrainConfig base;
  base.lr = lr;
  base.steps = steps;
  base.batch_size = batch;
  base.seed = margs.seed;
  base.image_size = margs.image_size();
  DatasetManifest train_data = load_manifest(dataset, DatasetLayout::kPairedDirs);
  DatasetManifest eval_data = load_manifest(eval_root, DatasetLayout::kPairedDirs);
  auto rows = ablate_losses(preset_config(margs.preset), base, train_data, eval_data, sets);
  std::ofstream os(out);
  if (!os) throw Error(ErrorKind::Input, "cannot write: " + out);
  os << format_ablation_table(rows);
  std::ofstream qs(out + ".quartiles.tsv");
  qs << format_ablation_quartiles(rows);
  std::cout << format_ablation_quartiles(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CE-VAE underwater image enhancement"};
  app.set_config("--config", "", "Optional key=value config file (flags take precedence)");
  app.require_subcommand(1);

  ModelArgs margs;

  auto* train = app.add_subcommand("train", "Pretrain or fine-tune a model");
  std::string dataset, layout = "auto", mode = "pretrain", toggles = "rec+lpips+gan+ssim";
  std::string init, ckpt_out = "model.ckpt", log_path;
  double lr = 4.5e-6;
  int steps = 100, batch = 6, disc_start = 1000, eval_every = 0;
  bool augment_on = false;
  margs.attach(train);
  train->add_option("--dataset", dataset, "Dataset root")->required();
  train->add_option("--layout", layout, "paired|identity (default: identity for pretrain)");
  train->add_option("--mode", mode, "pretrain|finetune");
  train->add_option("--toggles", toggles, "Loss terms, e.g. rec+ssim");
  train->add_option("--lr", lr, "Learning rate");
  train->add_option("--steps", steps, "Optimization steps");
  train->add_option("--batch-size", batch, "Batch size");
  train->add_option("--disc-start", disc_start, "First step with the adversarial term");
  train->add_flag("--augment", augment_on, "Random crop/flip augmentation");
  train->add_option("--init", init, "Checkpoint to resume from");
  train->add_option("--out", ckpt_out, "Output checkpoint path");
  train->add_option("--log", log_path, "Per-step loss log (TSV)");
  train->add_option("--eval-every", eval_every, "Periodic evaluation interval");

  auto* enhance = app.add_subcommand("enhance", "Enhance images (encode + decode)");
  std::string in_path, out_path = "out";
  margs.attach(enhance);
  enhance->add_option("--input", in_path, "Image file or directory")->required();
  enhance->add_option("--out", out_path, "Output directory");

  auto* encode = app.add_subcommand("encode", "Images -> .cevl latent files");
  std::string dtype = "f16";
  margs.attach(encode);
  encode->add_option("--input", in_path, "Image file or directory")->required();
  encode->add_option("--out", out_path, "Output directory");
  encode->add_option("--dtype", dtype, "f16|f32|f64");

  auto* decode = app.add_subcommand("decode", "Latent .cevl files -> enhanced images");
  margs.attach(decode);
  decode->add_option("--latent", in_path, ".cevl file or directory")->required();
  decode->add_option("--out", out_path, "Output directory");

  auto* evaluate = app.add_subcommand("evaluate", "PSNR/SSIM/LPIPS over a paired dataset");
  std::string metrics_out = "metrics.tsv";
  margs.attach(evaluate);
  evaluate->add_option("--dataset", dataset, "Paired dataset root")->required();
  evaluate->add_option("--out", metrics_out, "Metrics TSV path");

  auto* storage = app.add_subcommand("storage-report", "Storage/transmission arithmetic");
  std::string raw_shape = "3x256x256", latent_shape = "256x16x16";
  int bpv = 8;
  double bandwidth = 1e9, capacity = 2204.28e6, rate = 1.0;
  storage->add_option("--raw-shape", raw_shape, "e.g. 3x256x256");
  storage->add_option("--latent-shape", latent_shape, "e.g. 256x16x16");
  storage->add_option("--bytes-per-value", bpv, "Bytes per stored value");
  storage->add_option("--bandwidth", bandwidth, "Link speed, bits/s");
  storage->add_option("--capacity", capacity, "Device capacity, bytes");
  storage->add_option("--rate", rate, "Capture rate, images/s");

  auto* ablate = app.add_subcommand("ablate", "Loss-toggle ablation study");
  std::string eval_root, sets = "rec;rec+ssim", ablate_out = "ablation.tsv";
  double ab_lr = 1e-3;
  int ab_steps = 30, ab_batch = 4;
  margs.attach(ablate);
  ablate->add_option("--dataset", dataset, "Paired training dataset root")->required();
  ablate->add_option("--eval", eval_root, "Paired evaluation dataset root")->required();
  ablate->add_option("--toggle-sets", sets, "Semicolon-separated toggle sets");
  ablate->add_option("--out", ablate_out, "Records TSV path");
  ablate->add_option("--lr", ab_lr, "Learning rate");
  ablate->add_option("--steps", ab_steps, "Steps per toggle set");
  ablate->add_option("--batch-size", ab_batch, "Batch size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train)
      return cmd_train(margs, dataset, layout, mode, toggles, lr, steps, batch, disc_start,
                       augment_on, init, ckpt_out, log_path, eval_every);
    if (*enhance) return cmd_enhance(margs, in_path, out_path);
    if (*encode) return cmd_encode(margs, in_path, out_path, dtype);
    if (*decode) return cmd_decode(margs, in_path, out_path);
    if (*evaluate) return cmd_evaluate(margs, dataset, metrics_out);
    if (*storage) return cmd_storage_report(raw_shape, latent_shape, bpv, bandwidth, capacity, rate);
    if (*ablate)
      return cmd_ablate(margs, dataset, eval_root, sets, ablate_out, ab_lr, ab_steps, ab_batch);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::Config ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
