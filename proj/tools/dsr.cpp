// Command-line front end for the sign-retrieval image codec: training,
// encoding/decoding, evaluation, POCS ablation, benchmarking, and synthetic
// test-data generation.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsr/dsr.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::string> list_pgm_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw dsr::ConfigError(dir + " is not a directory");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw dsr::ConfigError("no .pgm files in " + dir);
  return files;
}

std::vector<dsr::Image> load_images(const std::vector<std::string>& files) {
  std::vector<dsr::Image> images;
  images.reserve(files.size());
  for (const std::string& f : files) images.push_back(dsr::load_pgm(f));
  return images;
}

dsr::Variant parse_variant(const std::string& name) {
  if (name == "pdsr") return dsr::Variant::PDSR;
  if (name == "rdsr") return dsr::Variant::RDSR;
  if (name == "fdsr") return dsr::Variant::FDSR;
  throw dsr::ConfigError("unknown variant: " + name);
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  size_t pos = 0;
  while (pos < csv.size()) {
    const size_t comma = csv.find(',', pos);
    const std::string tok = csv.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (!tok.empty()) out.push_back(std::stoi(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw dsr::ConfigError("empty list: " + csv);
  return out;
}

uint64_t fnv1a64(const std::vector<uint8_t>& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<uint8_t> image_bytes(const dsr::Image& img) {
  std::vector<uint8_t> bytes(img.pixel_count());
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = dsr::sample_to_byte(img.samples[i]);
  return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dsr::IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw dsr::IoError("write failed: " + path);
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dsr::IoError("cannot open " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
}

// Shared evaluation of one image at one QF against a loaded model.
dsr::EvalReport evaluate_one(const dsr::Image& img, const std::string& name, int qf,
                             const dsr::ModelParams& model) {
  const dsr::QuantTable table = dsr::scale_quant_table(dsr::base_quant_table(), qf);
  const dsr::PaddedImage padded = dsr::pad_to_blocks(img);
  const dsr::CoeffGrid grid = dsr::forward_grid(padded, table);

  const auto t0 = Clock::now();
  auto [truth, mags] = dsr::extract_signs(grid, table);
  const dsr::SignField restored = dsr::retrieve_signs(grid, table, model);
  const dsr::ResidualField residual = dsr::sign_residual(truth, restored);

  dsr::EvalReport r;
  r.image = name;
  r.qf = qf;
  r.n_signs = truth.size();
  r.n_pixels = img.pixel_count();
  std::tie(r.bps, r.bpp) = dsr::bps_bpp(residual, r.n_pixels);
  r.aos = dsr::aos(truth, restored);
  r.rc_bytes = dsr::rc_encode_bits(residual.bits).size();
  const dsr::Image baseline = dsr::baseline_image(grid, table, img.width, img.height);
  const dsr::PaddedImage x_restored =
      dsr::psi_forward(dsr::initial_image(grid, table), model, mags);
  r.psnr_restored = dsr::psnr(dsr::crop_to_original(x_restored), baseline);
  r.wall_time = seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string data, out, variant = "rdsr", loss_csv;
  int k = 20, qf = 50, patches = 50000, patch_size = 256, batch = 10, epochs = 50;
  double lr = 2e-4;
  uint64_t seed = 0;
};

int cmd_train(const TrainFlags& f) {
  const std::vector<dsr::Image> sources = load_images(list_pgm_files(f.data));
  std::printf("train: data=%s sources=%zu variant=%s k=%d qf=%d patches=%d "
              "patch_size=%d batch=%d epochs=%d lr=%g seed=%llu\n",
              f.data.c_str(), sources.size(), f.variant.c_str(), f.k, f.qf,
              f.patches, f.patch_size, f.batch, f.epochs, f.lr,
              (unsigned long long)f.seed);

  const std::vector<dsr::Image> patches =
      dsr::crop_patches(sources, f.patch_size, f.patches, f.seed, &std::cerr);

  dsr::TrainConfig cfg;
  cfg.qf_pocs = f.qf;
  cfg.lr = f.lr;
  cfg.batch = f.batch;
  cfg.epochs = f.epochs;
  cfg.recursion_depth = f.k;
  cfg.variant = parse_variant(f.variant);
  cfg.seed = f.seed;
  cfg.checkpoint_path = f.out;

  std::ofstream loss_file;
  std::ostream* loss_out = &std::cout;
  if (!f.loss_csv.empty() && f.loss_csv != "-") {
    loss_file.open(f.loss_csv);
    if (!loss_file) throw dsr::IoError("cannot open " + f.loss_csv);
    loss_out = &loss_file;
  }
  *loss_out << "epoch,mean_loss\n";

  const auto t0 = Clock::now();
  const dsr::ModelParams model = dsr::train(patches, cfg, [&](int epoch, double mean_loss) {
    *loss_out << epoch << "," << mean_loss << "\n";
    loss_out->flush();
    std::fprintf(stderr, "epoch %d/%d mean_loss %.6f (%.1fs)\n", epoch + 1,
                 f.epochs, mean_loss, seconds_since(t0));
  });
  dsr::save_checkpoint(model, f.out);
  std::printf("checkpoint written: %s (%zu parameters)\n", f.out.c_str(),
              model.param_count());
  return 0;
}

struct CodecFlags {
  std::string in, out, ckpt;
  int qf = 50;
  bool no_retrieval = false;
};

int cmd_encode(const CodecFlags& f) {
  const dsr::Image img = dsr::load_pgm(f.in);
  dsr::ModelParams model;
  const dsr::ModelParams* model_ptr = nullptr;
  if (!f.no_retrieval) {
    if (f.ckpt.empty()) {
      throw dsr::ConfigError("--ckpt is required unless --no-retrieval is given");
    }
    model = dsr::load_checkpoint(f.ckpt);
    model_ptr = &model;
  }
  const dsr::Bitstream stream = dsr::encode(img, f.qf, model_ptr, f.no_retrieval);
  write_file(f.out, stream);

  const dsr::StreamInfo info = dsr::parse_stream(stream);
  std::printf("encoded %s: %dx%d qf=%d dc=%zuB ac=%zuB signs=%zuB total=%zuB\n",
              f.out.c_str(), img.width, img.height, f.qf, info.dc_section.size(),
              info.ac_section.size(), info.sign_section.size(), stream.size());
  return 0;
}

int cmd_decode(const CodecFlags& f) {
  const dsr::Bitstream stream = read_file(f.in);
  const dsr::StreamInfo info = dsr::parse_stream(stream);
  dsr::ModelParams model;
  const dsr::ModelParams* model_ptr = nullptr;
  if (info.variant != dsr::kVariantNone) {
    if (f.ckpt.empty()) {
      throw dsr::ConfigError("stream uses sign retrieval; --ckpt is required");
    }
    model = dsr::load_checkpoint(f.ckpt);
    model_ptr = &model;
  }
  const dsr::Image img = dsr::decode(stream, model_ptr);
  dsr::save_pgm(img, f.out);
  std::printf("decoded %s: %dx%d qf=%d hash=%016llx\n", f.out.c_str(), img.width,
              img.height, info.qf, (unsigned long long)fnv1a64(image_bytes(img)));
  return 0;
}

struct EvalFlags {
  std::string data, ckpt, qf_list = "5,15,25,35,45,55,65,75,85,95", csv;
};

int cmd_eval(const EvalFlags& f) {
  const std::vector<std::string> files = list_pgm_files(f.data);
  const std::vector<dsr::Image> images = load_images(files);
  const dsr::ModelParams model = dsr::load_checkpoint(f.ckpt);
  const std::vector<int> qfs = parse_int_list(f.qf_list);

  std::ofstream csv_file;
  std::ostream* out = &std::cout;
  if (!f.csv.empty() && f.csv != "-") {
    csv_file.open(f.csv);
    if (!csv_file) throw dsr::IoError("cannot open " + f.csv);
    out = &csv_file;
  }
  *out << dsr::eval_csv_header() << "\n";

  for (int qf : qfs) {
    dsr::EvalReport mean;
    mean.image = "mean";
    mean.qf = qf;
    double psnr_sum = 0.0;
    for (size_t i = 0; i < images.size(); ++i) {
      const dsr::EvalReport r = evaluate_one(
          images[i], fs::path(files[i]).filename().string(), qf, model);
      *out << dsr::eval_csv_row(r) << "\n";
      mean.n_signs += r.n_signs;
      mean.n_pixels += r.n_pixels;
      mean.bps += r.bps;
      mean.bpp += r.bpp;
      mean.aos += r.aos;
      psnr_sum += r.psnr_restored;
      mean.rc_bytes += r.rc_bytes;
      mean.wall_time += r.wall_time;
    }
    const double n = double(images.size());
    mean.bps /= n;
    mean.bpp /= n;
    mean.aos /= n;
    mean.psnr_restored = psnr_sum / n;
    mean.wall_time /= n;
    *out << dsr::eval_csv_row(mean) << "\n";
    std::fprintf(stderr, "qf=%d mean aos=%.4f bps=%.4f bpp=%.4f\n", qf, mean.aos,
                 mean.bps, mean.bpp);
  }
  return 0;
}

struct AblateFlags {
  std::string data, k_list = "1,2,4", csv;
  bool no_pocs = false;  // restrict to the without-POCS arm
  int qf = 50, patches = 500, patch_size = 64, batch = 10, epochs = 3, holdout = 10;
  double lr = 2e-4;
  uint64_t seed = 0;
};

int cmd_ablate_k(const AblateFlags& f) {
  std::vector<dsr::Image> images = load_images(list_pgm_files(f.data));
  if (int(images.size()) <= f.holdout) {
    throw dsr::ConfigError("ablate-k: need more images than the holdout count");
  }
  const std::vector<dsr::Image> holdout(images.end() - f.holdout, images.end());
  images.resize(images.size() - size_t(f.holdout));
  const std::vector<dsr::Image> patches =
      dsr::crop_patches(images, f.patch_size, f.patches, f.seed, &std::cerr);
  const dsr::QuantTable table = dsr::scale_quant_table(dsr::base_quant_table(), f.qf);

  std::ofstream csv_file;
  std::ostream* out = &std::cout;
  if (!f.csv.empty() && f.csv != "-") {
    csv_file.open(f.csv);
    if (!csv_file) throw dsr::IoError("cannot open " + f.csv);
    out = &csv_file;
  }
  *out << "k,pocs,aos,psnr\n";

  std::vector<bool> arms = f.no_pocs ? std::vector<bool>{false}
                                     : std::vector<bool>{true, false};
  for (bool pocs : arms) {
    for (int k : parse_int_list(f.k_list)) {
      dsr::TrainConfig cfg;
      cfg.qf_pocs = f.qf;
      cfg.lr = f.lr;
      cfg.batch = f.batch;
      cfg.epochs = f.epochs;
      cfg.recursion_depth = k;
      cfg.variant = dsr::Variant::RDSR;
      cfg.seed = f.seed;
      cfg.use_pocs = pocs;
      const dsr::ModelParams model = dsr::train(patches, cfg);

      double aos_sum = 0.0, psnr_sum = 0.0;
      for (const dsr::Image& img : holdout) {
        const dsr::PaddedImage padded = dsr::pad_to_blocks(img);
        const dsr::CoeffGrid grid = dsr::forward_grid(padded, table);
        auto [truth, mags] = dsr::extract_signs(grid, table);
        aos_sum += dsr::aos(truth, dsr::retrieve_signs(grid, table, model));
        const dsr::Image baseline = dsr::baseline_image(grid, table, img.width, img.height);
        const dsr::PaddedImage xr =
            dsr::psi_forward(dsr::initial_image(grid, table), model, mags);
        psnr_sum += dsr::psnr(dsr::crop_to_original(xr), baseline);
      }
      const double n = double(holdout.size());
      *out << k << "," << (pocs ? 1 : 0) << "," << aos_sum / n << "," << psnr_sum / n << "\n";
      out->flush();
      std::fprintf(stderr, "k=%d pocs=%d aos=%.4f psnr=%.2f\n", k, int(pocs),
                   aos_sum / n, psnr_sum / n);
    }
  }
  return 0;
}

struct BenchFlags {
  std::string data, ckpt, qf_list = "5,15,25,35,45,55,65,75,85,95";
};

// Times one sign-compression pass (retrieval + residual + BPS) per image per
// QF, single- and multi-threaded, and cross-checks that the restored signs
// are identical under both thread counts.
int cmd_bench(const BenchFlags& f) {
  const std::vector<std::string> files = list_pgm_files(f.data);
  const std::vector<dsr::Image> images = load_images(files);
  const dsr::ModelParams model = dsr::load_checkpoint(f.ckpt);
  const std::vector<int> qfs = parse_int_list(f.qf_list);
  const int max_threads = dsr::resolve_default_threads();

  double per_image_single = 0.0, per_image_multi = 0.0;
  std::vector<dsr::SignField> single_outputs, multi_outputs;
  for (int threads : {1, max_threads}) {
    dsr::set_thread_count(threads);
    std::vector<dsr::SignField> outputs;
    double total = 0.0;
    for (const dsr::Image& img : images) {
      for (int qf : qfs) {
        const dsr::QuantTable table = dsr::scale_quant_table(dsr::base_quant_table(), qf);
        const dsr::CoeffGrid grid = dsr::forward_grid(dsr::pad_to_blocks(img), table);
        const auto t0 = Clock::now();
        auto [truth, mags] = dsr::extract_signs(grid, table);
        const dsr::SignField restored = dsr::retrieve_signs(grid, table, model);
        const dsr::ResidualField residual = dsr::sign_residual(truth, restored);
        dsr::bps_bpp(residual, img.pixel_count());
        total += seconds_since(t0);
        outputs.push_back(restored);
      }
    }
    // Table-style summary: time for one image at one QF, averaged over QFs.
    const double per_image = total / double(images.size() * qfs.size());
    std::printf("threads=%d seconds_per_image=%.4f (mean over %zu images x %zu QFs)\n",
                threads, per_image, images.size(), qfs.size());
    (threads == 1 ? per_image_single : per_image_multi) = per_image;
    (threads == 1 ? single_outputs : multi_outputs) = std::move(outputs);
  }

  const bool same = single_outputs == multi_outputs;
  std::printf("thread_count_invariance=%s\n", same ? "ok" : "MISMATCH");
  std::printf("speedup=%.2fx\n",
              per_image_multi > 0 ? per_image_single / per_image_multi : 0.0);
  return same ? 0 : 1;
}

struct GendataFlags {
  std::string out;
  int count = 10, width = 320, height = 320;
  uint64_t seed = 1;
};

int cmd_gendata(const GendataFlags& f) {
  fs::create_directories(f.out);
  for (int i = 0; i < f.count; ++i) {
    const dsr::Image img = dsr::make_synthetic_image(f.seed + uint64_t(i), f.width, f.height);
    char name[64];
    std::snprintf(name, sizeof(name), "img_%04d.pgm", i);
    dsr::save_pgm(img, (fs::path(f.out) / name).string());
  }
  std::printf("wrote %d %dx%d images to %s\n", f.count, f.width, f.height, f.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grayscale DCT image codec with learned sign retrieval"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (0 = DSR_THREADS env or hardware default)");

  TrainFlags tf;
  CLI::App* train = app.add_subcommand("train", "train a sign-retrieval model");
  train->add_option("--data", tf.data, "directory of training PGMs")->required();
  train->add_option("--out", tf.out, "output checkpoint path")->required();
  train->add_option("--variant", tf.variant, "pdsr|rdsr|fdsr (default rdsr)");
  train->add_option("--k", tf.k, "recursion depth (default 20)");
  train->add_option("--qf", tf.qf, "training quality factor (default 50)");
  train->add_option("--patches", tf.patches, "number of training patches (default 50000)");
  train->add_option("--patch-size", tf.patch_size, "patch size in pixels (default 256)");
  train->add_option("--batch", tf.batch, "batch size (default 10)");
  train->add_option("--epochs", tf.epochs, "epochs (default 50)");
  train->add_option("--lr", tf.lr, "Adam learning rate (default 2e-4)");
  train->add_option("--seed", tf.seed, "RNG seed");
  train->add_option("--loss-csv", tf.loss_csv, "per-epoch loss CSV path ('-' = stdout)");

  CodecFlags ef;
  CLI::App* enc = app.add_subcommand("encode", "encode a PGM image");
  enc->add_option("--in", ef.in, "input PGM")->required();
  enc->add_option("--out", ef.out, "output bitstream")->required();
  enc->add_option("--ckpt", ef.ckpt, "model checkpoint");
  enc->add_option("--qf", ef.qf, "quality factor (default 50)");
  enc->add_flag("--no-retrieval", ef.no_retrieval, "store raw sign bits (baseline mode)");

  CodecFlags df;
  CLI::App* dec = app.add_subcommand("decode", "decode a bitstream");
  dec->add_option("--in", df.in, "input bitstream")->required();
  dec->add_option("--out", df.out, "output PGM")->required();
  dec->add_option("--ckpt", df.ckpt, "model checkpoint (required for retrieval streams)");

  EvalFlags vf;
  CLI::App* ev = app.add_subcommand(
      "eval", "per-image, per-QF metrics CSV; columns: " + std::string(dsr::eval_csv_header()) +
                  "; one extra 'mean' row per QF");
  ev->add_option("--data", vf.data, "directory of test PGMs")->required();
  ev->add_option("--ckpt", vf.ckpt, "model checkpoint")->required();
  ev->add_option("--qf-list", vf.qf_list, "comma-separated QFs");
  ev->add_option("--csv", vf.csv, "output CSV path ('-' = stdout)");

  AblateFlags af;
  CLI::App* ab = app.add_subcommand("ablate-k", "train/evaluate across K with and without POCS");
  ab->add_option("--data", af.data, "directory of PGMs (trains on all but the holdout)")->required();
  ab->add_option("--k-list", af.k_list, "comma-separated recursion depths");
  ab->add_flag("--no-pocs", af.no_pocs, "run only the without-POCS arm");
  ab->add_option("--qf", af.qf, "quality factor (default 50)");
  ab->add_option("--patches", af.patches, "training patches per run (default 500)");
  ab->add_option("--patch-size", af.patch_size, "patch size (default 64)");
  ab->add_option("--batch", af.batch, "batch size (default 10)");
  ab->add_option("--epochs", af.epochs, "epochs per run (default 3)");
  ab->add_option("--lr", af.lr, "learning rate (default 2e-4)");
  ab->add_option("--seed", af.seed, "RNG seed");
  ab->add_option("--holdout", af.holdout, "images held out for evaluation (default 10)");
  ab->add_option("--csv", af.csv, "output CSV path ('-' = stdout)");

  BenchFlags bf;
  CLI::App* be = app.add_subcommand("bench", "time sign retrieval + metrics per image per QF");
  be->add_option("--data", bf.data, "directory of PGMs")->required();
  be->add_option("--ckpt", bf.ckpt, "model checkpoint")->required();
  be->add_option("--qf-list", bf.qf_list, "comma-separated QFs");

  GendataFlags gf;
  CLI::App* gen = app.add_subcommand("gendata", "write seeded synthetic grayscale PGMs");
  gen->add_option("--out", gf.out, "output directory")->required();
  gen->add_option("--count", gf.count, "number of images (default 10)");
  gen->add_option("--width", gf.width, "image width (default 320)");
  gen->add_option("--height", gf.height, "image height (default 320)");
  gen->add_option("--seed", gf.seed, "RNG seed (default 1)");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) dsr::set_thread_count(threads);

  try {
    if (app.got_subcommand(train)) return cmd_train(tf);
    if (app.got_subcommand(enc)) return cmd_encode(ef);
    if (app.got_subcommand(dec)) return cmd_decode(df);
    if (app.got_subcommand(ev)) return cmd_eval(vf);
    if (app.got_subcommand(ab)) return cmd_ablate_k(af);
    if (app.got_subcommand(be)) return cmd_bench(bf);
    if (app.got_subcommand(gen)) return cmd_gendata(gf);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
