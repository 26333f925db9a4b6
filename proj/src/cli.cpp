#include "lpatch/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <openssl/evp.h>

#include <CLI11.hpp>

#include "lpatch/augment.hpp"
#include "lpatch/dataset.hpp"
#include "lpatch/detector.hpp"
#include "lpatch/errors.hpp"
#include "lpatch/evaluation.hpp"
#include "lpatch/optimizer.hpp"
#include "lpatch/parallel.hpp"

namespace fs = std::filesystem;

namespace lpatch {

namespace {

// Bad invocation detected after parsing (missing inputs, bad names...).
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double seconds_between(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

}  // namespace

std::string git_blob_sha1(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("SHA-1 computation failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::string git_blob_sha1_file(const fs::path& path) { return git_blob_sha1(read_file(path)); }

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)) {
  start_ = last_ = std::chrono::steady_clock::now();
}

void RunManifest::add_input(const std::string& role, const fs::path& path) {
  inputs_.push_back({{"role", role}, {"path", path.string()}, {"sha1", git_blob_sha1_file(path)}});
}

void RunManifest::add_dataset(const std::string& role, const fs::path& dir) {
  const fs::path ann = dir / "annotations.json";
  nlohmann::json files = nlohmann::json::array();
  files.push_back({{"path", "annotations.json"}, {"sha1", git_blob_sha1_file(ann)}});
  for (const auto& a : parse_annotations(ann)) {
    files.push_back({{"path", a.image_id}, {"sha1", git_blob_sha1_file(dir / a.image_id)}});
  }
  // One digest over the listing, so two datasets compare with a single string.
  const std::string digest = git_blob_sha1(files.dump());
  inputs_.push_back({{"role", role}, {"path", dir.string()}, {"sha1", digest}, {"files", files}});
}

void RunManifest::add_output(const std::string& role, const fs::path& path) {
  outputs_.push_back({{"role", role}, {"path", path.string()}});
}

void RunManifest::mark(const std::string& phase) {
  const auto now = std::chrono::steady_clock::now();
  timings_[phase] = seconds_between(last_, now);
  last_ = now;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json t = timings_;
  t["total"] = seconds_between(start_, std::chrono::steady_clock::now());
  return {{"command", command_}, {"argv", argv_},   {"seed", seed_},       {"config", config_},
          {"inputs", inputs_},   {"outputs", outputs_}, {"results", results_}, {"timings_s", t}};
}

void RunManifest::write(const fs::path& out_dir) const {
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw IngestionError("cannot write " + (out_dir / "manifest.json").string());
  out << to_json().dump(2) << '\n';
}

namespace {

struct Common {
  std::uint64_t seed = 0;
  int workers = 1;
  std::string config;
  std::string out;
  std::string mode;
  double iou_thresh = 0.5;
  double conf_thresh = 0.25;
};

void require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path)) throw UsageError(std::string(what) + " directory not found: " + path);
  if (!fs::exists(fs::path(path) / "annotations.json")) {
    throw UsageError(std::string(what) + " has no annotations.json: " + path);
  }
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

fs::path make_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IngestionError("cannot create output directory " + out);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw IngestionError("cannot write " + path.string());
}

// Evaluation settings: defaults, then the config file's placement/scene, then flags.
EvalOptions eval_options(const Common& c) {
  EvalOptions o;
  if (!c.config.empty()) {
    const AttackConfig cfg = load_attack_config(c.config);
    o.placement = cfg.placement;
    o.scene = cfg.scene;
  }
  o.thresholds.iou = c.iou_thresh;
  o.thresholds.confidence = c.conf_thresh;
  o.seed = c.seed;
  o.workers = c.workers;
  if (!(c.iou_thresh > 0 && c.iou_thresh <= 1)) throw ValidationError("--iou-thresh must lie in (0,1]");
  if (!(c.conf_thresh >= 0 && c.conf_thresh <= 1)) throw ValidationError("--conf-thresh must lie in [0,1]");
  return o;
}

nlohmann::json eval_json(const EvalOptions& o) {
  return {{"iou_thresh", o.thresholds.iou},
          {"conf_thresh", o.thresholds.confidence},
          {"ap_floor", o.thresholds.ap_floor},
          {"nms_iou", o.thresholds.nms_iou},
          {"seed", o.seed},
          {"placement",
           {{"size_ratio", o.placement.size_ratio},
            {"offset_range", o.placement.offset_range},
            {"rotation_range_deg", o.placement.rotation_range_deg}}},
          {"scene",
           {{"contrast_range", {o.scene.contrast_lo, o.scene.contrast_hi}},
            {"brightness_range", {o.scene.brightness_lo, o.scene.brightness_hi}},
            {"noise_amplitude", o.scene.noise_amplitude}}}};
}

// "random", a PNG/JPEG image, or an APATCHv1 sidecar.
Patch load_patch_arg(const std::string& spec, std::uint64_t seed, int side, RunManifest& m,
                     const std::string& role) {
  if (spec == "random") {
    Rng rng(derive_seed(seed, "random-patch"));
    return make_random_patch(side, rng);
  }
  require_file(spec, "patch");
  m.add_input(role, spec);
  const std::string ext = fs::path(spec).extension().string();
  if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
    Image img = read_image(spec);
    if (img.height() != img.width()) throw FormatError(spec + ": patch image is not square");
    return Patch(std::move(img));
  }
  return load_patch_sidecar(spec);
}

// NAME=PATH, or PATH alone (name = file stem).
std::pair<std::string, std::string> named(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos) return {arg == "random" ? "random" : fs::path(arg).stem().string(), arg};
  if (eq == 0 || eq + 1 == arg.size()) throw UsageError("expected NAME=PATH, got '" + arg + "'");
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

int cmd_synth(const Common& c, int count, int size, RunManifest& m) {
  if (count < 0) throw ValidationError("--count must be >= 0");
  SyntheticSceneOptions opt;
  opt.size = size;
  if (size < 64) throw ValidationError("--size must be >= 64");
  const fs::path out = make_out_dir(c.out);
  m.set_seed(c.seed);
  m.set_config({{"count", count}, {"size", size}});
  const auto anns = write_synthetic_dataset(out, count, c.seed, opt);
  m.mark("generate");
  m.add_output("annotations", out / "annotations.json");
  m.add_output("images", out / "images");
  m.add_result("images", anns.size());
  std::size_t boxes = 0;
  for (const auto& a : anns) boxes += a.boxes.size();
  m.add_result("boxes", boxes);
  m.write(out);
  std::cout << "wrote " << anns.size() << " images (" << boxes << " ships) to " << out.string() << '\n';
  return kExitOk;
}

int cmd_train_detector(const Common& c, const std::string& data, const std::string& heldout_dir,
                       const std::string& variant, int epochs, double min_ap, int input_size,
                       RunManifest& m) {
  require_dir(data, "dataset");
  if (!heldout_dir.empty()) require_dir(heldout_dir, "held-out dataset");
  ToyDetectorConfig cfg;
  cfg.variant = parse_variant(variant);
  cfg.input_size = input_size;
  DetectorTrainOptions opt;
  opt.epochs = epochs;
  opt.min_ap = min_ap;
  opt.seed = c.seed;
  if (epochs <= 0) throw ValidationError("--epochs must be positive");

  LoadOptions lo;
  lo.input_size = input_size;
  Dataset all = load_dataset(data, lo);
  m.add_dataset("train", data);
  Dataset train, heldout;
  if (heldout_dir.empty()) {
    // Every fifth image is held out.
    for (std::size_t i = 0; i < all.size(); ++i) (i % 5 == 4 ? heldout : train).push_back(std::move(all[i]));
  } else {
    train = std::move(all);
    heldout = load_dataset(heldout_dir, lo);
    m.add_dataset("heldout", heldout_dir);
  }
  if (train.size() < 100) {
    throw ValidationError("detector training needs at least 100 training images, got " +
                          std::to_string(train.size()));
  }
  m.mark("load");
  m.set_seed(c.seed);
  m.set_config({{"variant", variant},
                {"input_size", input_size},
                {"anchor", cfg.anchor},
                {"base_channels", cfg.base_channels},
                {"strides", cfg.strides},
                {"epochs", epochs},
                {"batch_size", opt.batch_size},
                {"learning_rate", opt.learning_rate},
                {"box_weight", opt.box_weight},
                {"min_ap", min_ap},
                {"heldout", heldout_dir.empty() ? "every 5th image" : heldout_dir}});

  const fs::path out = make_out_dir(c.out);
  opt.on_epoch = [&](int e, double loss) {
    std::cout << "epoch " << e + 1 << "/" << epochs << " loss " << loss << '\n' << std::flush;
  };
  DetectorTrainResult res;
  try {
    res = train_toy_detector(train, heldout, cfg, opt);
  } catch (const TrainingError&) {
    m.mark("train");
    m.add_result("status", "AP floor not reached");
    m.write(out);
    throw;
  }
  m.mark("train");
  res.detector.save(out / "detector.bin");
  std::ostringstream log;
  log << "epoch,loss\n";
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) log << e + 1 << ',' << res.epoch_loss[e] << '\n';
  write_text(out / "detector_log.csv", log.str());
  m.mark("write");
  m.add_output("detector", out / "detector.bin");
  m.add_output("log", out / "detector_log.csv");
  m.add_result("heldout_ap", res.heldout_ap);
  m.add_result("parameter_count", res.detector.parameter_count());
  m.add_result("parameter_hash", res.detector.parameter_hash());
  m.write(out);
  std::cout << res.detector.name() << " held-out AP@0.5 " << res.heldout_ap << '\n';
  return kExitOk;
}

int cmd_attack(const Common& c, const std::string& detector_path, const std::string& data,
               bool seed_given, bool workers_given, RunManifest& m) {
  AttackConfig cfg;
  if (!c.config.empty()) {
    require_file(c.config, "config");
    cfg = load_attack_config(c.config);
    m.add_input("config", c.config);
  }
  if (!c.mode.empty()) cfg.mode = parse_augment_mode(c.mode);
  if (seed_given) cfg.seed = c.seed;
  if (workers_given) cfg.workers = c.workers;
  cfg.validate();
  require_file(detector_path, "detector");
  require_dir(data, "dataset");
  const ToyDetector det = ToyDetector::load(detector_path);
  m.add_input("detector", detector_path);
  LoadOptions lo;
  lo.input_size = det.input_size();
  const Dataset ds = load_dataset(data, lo);
  m.add_dataset("dataset", data);
  m.set_seed(cfg.seed);
  m.set_config(to_json(cfg));
  m.mark("load");

  const fs::path out = make_out_dir(c.out);
  const TrainResult res = train_patch(cfg, ds, det, PrintableSet::standard(), [&](const EpochLog& l) {
    std::cout << "epoch " << l.epoch << "/" << cfg.epochs << " det " << l.det_loss << " tv " << l.tv_loss
              << " nps " << l.nps_loss << " total " << l.total << '\n'
              << std::flush;
  });
  m.mark("train");
  save_patch_sidecar(out / "patch.apatch", res.patch);
  write_image(out / "patch.png", res.patch.image());
  write_text(out / "training_log.csv", training_log_csv(res.log));
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
  m.mark("write");
  for (const char* f : {"patch.apatch", "patch.png", "training_log.csv", "config.json"}) {
    m.add_output(f, out / f);
  }
  m.add_result("patch_sha1", git_blob_sha1_file(out / "patch.apatch"));
  m.add_result("detector_hash_before", res.detector_hash_before);
  m.add_result("detector_hash_after", res.detector_hash_after);
  m.add_result("final_det_loss", res.log.back().det_loss);
  m.write(out);
  std::cout << "patch written to " << (out / "patch.apatch").string() << '\n';
  return kExitOk;
}

int cmd_evaluate(const Common& c, const std::string& patch_spec, const std::string& detector_path,
                 const std::string& data, int random_side, RunManifest& m) {
  const EvalOptions eo = eval_options(c);
  if (!c.config.empty()) m.add_input("config", c.config);
  require_file(detector_path, "detector");
  require_dir(data, "dataset");
  const ToyDetector det = ToyDetector::load(detector_path);
  m.add_input("detector", detector_path);
  std::optional<Patch> patch;
  if (patch_spec != "none") patch = load_patch_arg(patch_spec, c.seed, random_side, m, "patch");
  LoadOptions lo;
  lo.input_size = det.input_size();
  const Dataset ds = load_dataset(data, lo);
  m.add_dataset("dataset", data);
  m.set_seed(c.seed);
  nlohmann::json cfg = eval_json(eo);
  cfg["patch"] = patch_spec;
  m.set_config(cfg);
  m.mark("load");

  const fs::path out = make_out_dir(c.out);
  const MetricsReport rep = evaluate_patch(det, ds, patch ? &*patch : nullptr, eo);
  m.mark("evaluate");
  write_text(out / "report.json", rep.to_json().dump(2) + "\n");
  write_text(out / "report.csv", rep.to_csv());
  m.add_output("report", out / "report.json");
  m.add_output("report_csv", out / "report.csv");
  m.add_result("ap", rep.ap);
  m.add_result("recall", rep.recall);
  m.add_result("asr", rep.asr);
  m.write(out);
  std::cout << std::fixed << std::setprecision(4) << "AP " << rep.ap << "  recall " << rep.recall << "  ASR "
            << rep.asr << "  (clean AP " << rep.clean_ap << ", clean recall " << rep.clean_recall << ")\n";
  return kExitOk;
}

int cmd_transfer(const Common& c, const std::vector<std::string>& patch_args,
                 const std::vector<std::string>& detector_args, const std::string& data, int random_side,
                 RunManifest& m) {
  if (detector_args.size() < 2) throw UsageError("transfer needs at least two --detector entries");
  if (patch_args.empty()) throw UsageError("transfer needs at least one --patch entry");
  const EvalOptions eo = eval_options(c);
  if (!c.config.empty()) m.add_input("config", c.config);
  require_dir(data, "dataset");

  std::vector<std::pair<std::string, Patch>> patches;
  for (const auto& a : patch_args) {
    auto [name, path] = named(a);
    patches.emplace_back(name, load_patch_arg(path, c.seed, random_side, m, "patch:" + name));
  }
  std::vector<ToyDetector> dets;
  std::vector<std::string> det_names;
  for (const auto& a : detector_args) {
    auto [name, path] = named(a);
    require_file(path, "detector");
    dets.push_back(ToyDetector::load(path));
    m.add_input("detector:" + name, path);
    det_names.push_back(name);
  }
  for (const auto& d : dets) {
    if (d.input_size() != dets.front().input_size()) {
      throw UsageError("transfer detectors must share one input size");
    }
  }
  std::vector<std::pair<std::string, const DetectorModel*>> det_refs;
  for (std::size_t i = 0; i < dets.size(); ++i) det_refs.emplace_back(det_names[i], &dets[i]);
  LoadOptions lo;
  lo.input_size = dets.front().input_size();
  const Dataset ds = load_dataset(data, lo);
  m.add_dataset("dataset", data);
  m.set_seed(c.seed);
  m.set_config(eval_json(eo));
  m.mark("load");

  const fs::path out = make_out_dir(c.out);
  const TransferMatrix tm = transfer_matrix(patches, det_refs, ds, eo);
  m.mark("evaluate");
  write_text(out / "transfer.csv", tm.to_csv());
  m.add_output("matrix", out / "transfer.csv");
  m.add_result("asr", tm.asr);
  m.write(out);
  std::cout << tm.to_csv();
  return kExitOk;
}

int cmd_augment_preview(const Common& c, const std::string& data, int count, RunManifest& m) {
  require_dir(data, "dataset");
  const AugmentMode mode = parse_augment_mode(c.mode.empty() ? "local" : c.mode);
  if (count < 0) throw ValidationError("--count must be >= 0");
  const auto anns = parse_annotations(fs::path(data) / "annotations.json");
  m.add_dataset("dataset", data);
  m.set_seed(c.seed);
  m.set_config({{"mode", to_string(mode)}, {"count", count}});
  const fs::path out = make_out_dir(c.out);
  const std::size_t n = std::min<std::size_t>(anns.size(), static_cast<std::size_t>(count));
  std::vector<std::string> names(n);
  parallel_for(n, c.workers, [&](std::size_t i) {
    const Image img = read_image(fs::path(data) / anns[i].image_id);
    Rng rng(derive_seed(c.seed, "augment", 0, i));
    const Image aug = augment_for_mode(img, anns[i], mode, rng);
    // Original on the left, augmented on the right.
    Image pair(img.height(), 2 * img.width());
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        for (int ch = 0; ch < 3; ++ch) {
          pair.at(y, x, ch) = img.at(y, x, ch);
          pair.at(y, x + img.width(), ch) = aug.at(y, x, ch);
        }
    char name[32];
    std::snprintf(name, sizeof name, "preview_%05zu.png", i);
    names[i] = name;
    write_image(out / name, pair);
  });
  m.mark("render");
  for (const auto& name : names) m.add_output("preview", out / name);
  m.write(out);
  std::cout << "wrote " << n << " previews to " << out.string() << '\n';
  return kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
  sub->add_option("--seed", c.seed, "master seed")->capture_default_str();
  sub->add_option("--workers", c.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  auto* out = sub->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Localized-augmentation adversarial patches against object detectors"};
  app.require_subcommand(1);
  std::vector<std::string> args(argv, argv + argc);
  Common c;

  auto* synth = app.add_subcommand("synth", "generate a synthetic ship dataset");
  int count = 0, size = 96;
  add_common(synth, c);
  synth->add_option("--count", count, "number of images")->required();
  synth->add_option("--size", size, "image side in pixels")->capture_default_str();

  auto* train = app.add_subcommand("train-detector", "train a toy detector");
  std::string data, heldout, variant = "s";
  int epochs = 30, input_size = 96;
  double min_ap = 0.95;
  add_common(train, c);
  train->add_option("--data", data, "training dataset directory")->required();
  train->add_option("--heldout", heldout, "held-out dataset directory (default: every 5th image)");
  train->add_option("--variant", variant, "n, s or m")->capture_default_str();
  train->add_option("--epochs", epochs)->capture_default_str();
  train->add_option("--min-ap", min_ap, "required held-out AP@0.5")->capture_default_str();
  train->add_option("--input-size", input_size)->capture_default_str();

  auto* attack = app.add_subcommand("attack", "optimise an adversarial patch");
  std::string detector;
  add_common(attack, c);
  attack->add_option("--config", c.config, "attack configuration JSON");
  attack->add_option("--detector", detector, "detector checkpoint")->required();
  attack->add_option("--data", data, "dataset directory")->required();
  attack->add_option("--mode", c.mode, "augmentation: none, global or local");

  auto* evaluate = app.add_subcommand("evaluate", "AP / recall / ASR of a patch");
  std::string patch_spec;
  int random_side = 64;
  add_common(evaluate, c);
  evaluate->add_option("--patch", patch_spec, "patch file, 'random' or 'none'")->required();
  evaluate->add_option("--detector", detector, "detector checkpoint")->required();
  evaluate->add_option("--data", data, "dataset directory")->required();
  evaluate->add_option("--config", c.config, "attack configuration supplying placement/scene");
  evaluate->add_option("--iou-thresh", c.iou_thresh)->capture_default_str();
  evaluate->add_option("--conf-thresh", c.conf_thresh)->capture_default_str();
  evaluate->add_option("--random-side", random_side, "side of the random patch")->capture_default_str();

  auto* transfer = app.add_subcommand("transfer", "ASR of every patch on every detector");
  std::vector<std::string> patch_args, detector_args;
  add_common(transfer, c);
  transfer->add_option("--patch", patch_args, "NAME=PATH (repeatable; PATH may be 'random')")->required();
  transfer->add_option("--detector", detector_args, "NAME=PATH (repeatable, at least two)")->required();
  transfer->add_option("--data", data, "dataset directory")->required();
  transfer->add_option("--config", c.config, "attack configuration supplying placement/scene");
  transfer->add_option("--iou-thresh", c.iou_thresh)->capture_default_str();
  transfer->add_option("--conf-thresh", c.conf_thresh)->capture_default_str();
  transfer->add_option("--random-side", random_side)->capture_default_str();

  auto* preview = app.add_subcommand("augment-preview", "write original|augmented image pairs");
  int preview_count = 8;
  add_common(preview, c);
  preview->add_option("--data", data, "dataset directory")->required();
  preview->add_option("--mode", c.mode, "none, global or local")->default_str("local");
  preview->add_option("--count", preview_count, "number of images")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  RunManifest manifest(sub->get_name(), args);
  try {
    if (sub == synth) return cmd_synth(c, count, size, manifest);
    if (sub == train) return cmd_train_detector(c, data, heldout, variant, epochs, min_ap, input_size, manifest);
    if (sub == attack) {
      return cmd_attack(c, detector, data, attack->count("--seed") > 0, attack->count("--workers") > 0,
                        manifest);
    }
    if (sub == evaluate) return cmd_evaluate(c, patch_spec, detector, data, random_side, manifest);
    if (sub == transfer) return cmd_transfer(c, patch_args, detector_args, data, random_side, manifest);
    if (sub == preview) return cmd_augment_preview(c, data, preview_count, manifest);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace lpatch
