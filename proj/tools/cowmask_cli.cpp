#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cowmask/checkpoint.hpp"
#include "cowmask/error.hpp"
#include "cowmask/gaussian_filter.hpp"
#include "cowmask/maskgen.hpp"
#include "cowmask/png_io.hpp"
#include "cowmask/run_config.hpp"
#include "cowmask/trainer.hpp"

#ifndef COWMASK_VERSION
#define COWMASK_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cowmask;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumeric = 4 };

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(DataErrorKind::io, "cannot write " + tmp.string());
    out << text;
    if (!out) throw DataError(DataErrorKind::io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------- gen-masks

struct GenMasksArgs {
  std::string kind = "cow";
  int size = 64;
  std::vector<double> sigma{4.0, 16.0};
  std::vector<double> p{0.2, 0.8};
  std::vector<double> area{0.25, 0.25};
  double beta = 1.0;
  int count = 8;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out = "masks_out";
};

MaskConfig mask_config_from(const GenMasksArgs& a) {
  switch (parse_mask_kind(a.kind)) {
    case MaskKind::cow:
      return CowMaskConfig{a.sigma[0], a.sigma[1], a.p[0], a.p[1], a.size, a.size};
    case MaskKind::box:
      return BoxMaskConfig{a.area[0], a.area[1], a.size, a.size};
    case MaskKind::constant:
      return ConstantMaskConfig{a.beta, a.size, a.size};
  }
  throw ConfigError("kind", "unknown mask kind");
}

int run_gen_masks(const GenMasksArgs& a) {
  if (a.count < 1) throw ConfigError("n", "must be at least 1");
  if (a.workers < 1) throw ConfigError("workers", "must be at least 1");
  const MaskConfig cfg = mask_config_from(a);
  std::visit([](const auto& c) { c.validate(); }, cfg);

  Rng rng(a.seed);
  const std::vector<Mask> masks = make_batch(cfg, a.count, rng, a.workers);

  const fs::path dir = fs::path(a.out) / "masks";
  fs::create_directories(dir);
  json items = json::array();
  double total = 0.0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "mask_%05zu.png", i);
    write_png(dir / name, mask_to_png(masks[i]));
    const double ones = masks[i].ones_fraction();
    total += ones;
    json item;
    item["file"] = std::string("masks/") + name;
    item["sigma"] = masks[i].sigma;
    item["p"] = masks[i].proportion;
    item["ones_fraction"] = ones;
    item["component_count"] = count_components(masks[i].plane);
    items.push_back(std::move(item));
  }
  json stats;
  stats["kind"] = a.kind;
  stats["size"] = a.size;
  stats["count"] = a.count;
  stats["seed"] = a.seed;
  stats["mean_ones_fraction"] = total / static_cast<double>(masks.size());
  stats["masks"] = std::move(items);
  write_text(fs::path(a.out) / "stats.json", stats.dump(2) + "\n");
  std::cout << json{{"count", a.count}, {"mean_ones_fraction", stats["mean_ones_fraction"]}}.dump()
            << "\n";
  return kOk;
}

// -------------------------------------------------------------------- bench

struct BenchArgs {
  std::vector<int> sizes{32, 64, 224};
  std::vector<double> sigma{32.0, 128.0};
  int count = 16;
  int workers = 0;
  std::uint64_t seed = 0;
  double filter_sigma = 64.0;
  int filter_size = 224;
  bool skip_direct = false;
  std::string json_out;
};

int run_bench(const BenchArgs& a) {
  const int workers = a.workers > 0 ? a.workers
                                    : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  json report;
  report["version"] = COWMASK_VERSION;
  report["hardware_threads"] = std::thread::hardware_concurrency();
  json grid = json::array();
  bool identical = true;
  for (const int size : a.sizes) {
    CowMaskConfig cfg{a.sigma[0], a.sigma[1], 0.5, 0.5, size, size};
    cfg.validate();
    std::vector<Mask> reference;
    const std::vector<int> counts = workers > 1 ? std::vector<int>{1, workers} : std::vector<int>{1};
    for (const int w : counts) {
      Rng rng(a.seed);
      const auto t0 = Clock::now();
      std::vector<Mask> masks = make_batch(cfg, a.count, rng, w);
      const double secs = seconds_since(t0);
      if (reference.empty()) {
        reference = std::move(masks);
      } else {
        for (std::size_t i = 0; i < masks.size(); ++i)
          identical = identical && masks[i].plane.values == reference[i].plane.values;
      }
      json row;
      row["size"] = size;
      row["sigma_min"] = a.sigma[0];
      row["sigma_max"] = a.sigma[1];
      row["count"] = a.count;
      row["workers"] = w;
      row["seconds"] = secs;
      row["masks_per_sec"] = a.count / secs;
      grid.push_back(std::move(row));
    }
  }
  report["grid"] = std::move(grid);
  report["bit_identical_across_workers"] = identical;

  if (!a.skip_direct) {
    Rng rng(a.seed);
    Plane noise(a.filter_size, a.filter_size);
    rng.fill_normal(noise.values);
    auto t0 = Clock::now();
    int reps = 0;
    Plane sep;
    do {
      sep = gaussian_filter_2d(noise, a.filter_sigma);
      ++reps;
    } while (seconds_since(t0) < 0.5);
    const double separable = seconds_since(t0) / reps;
    t0 = Clock::now();
    const Plane direct = gaussian_filter_2d_direct(noise, a.filter_sigma);
    const double direct_secs = seconds_since(t0);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < direct.values.size(); ++i)
      max_diff = std::max(max_diff, std::abs(direct.values[i] - sep.values[i]));
    json f;
    f["size"] = a.filter_size;
    f["sigma"] = a.filter_sigma;
    f["separable_seconds"] = separable;
    f["direct_seconds"] = direct_secs;
    f["speedup"] = direct_secs / separable;
    f["max_abs_diff"] = max_diff;
    report["filter"] = std::move(f);
  }

  const std::string text = report.dump(2) + "\n";
  if (a.json_out.empty())
    std::cout << text;
  else
    write_text(a.json_out, text);
  return identical ? kOk : kFailure;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  std::vector<std::string> flags;  // key, value pairs in command-line order
  std::string config_file;
  std::string manifest;
  std::string out = "run_out";
  bool resume = false;
  int stop_after = 0;
};

json make_manifest(const RunConfig& cfg, const fs::path& out) {
  json m;
  m["config"] = to_json(cfg);
  m["version"] = COWMASK_VERSION;
  m["seed"] = cfg.train.seed;
  m["start_time"] = utc_now();
  m["output_dir"] = fs::absolute(out).string();
  return m;
}

RunConfig resolve_train_config(const TrainArgs& a) {
  std::vector<Setting> settings;
  if (!a.config_file.empty()) settings = parse_settings(read_text(a.config_file));
  for (std::size_t i = 0; i + 1 < a.flags.size(); i += 2) settings.emplace_back(a.flags[i], a.flags[i + 1]);

  if (a.manifest.empty()) return resolve_run_config(settings);
  RunConfig cfg = run_config_from_json(json::parse(read_text(a.manifest)).at("config"));
  for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
  cfg.validate();
  return cfg;
}

std::vector<std::string> read_lines(const fs::path& path, std::size_t limit) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  std::string line;
  while (lines.size() < limit && std::getline(in, line)) lines.push_back(line);
  return lines;
}

constexpr int kSampleMasks = 8;
constexpr std::uint64_t kSampleMaskStream = 99;

// Masks from the run's generator, drawn on a stream training never reads.
void write_sample_masks(const RunConfig& cfg, const Trainer& trainer, const fs::path& dir) {
  if (cfg.train.mode == TrainMode::supervised_only) return;
  const ImageBatch& x = trainer.train_set();
  Rng rng = Rng(cfg.train.seed).fork(kSampleMaskStream);
  const auto masks = make_batch(cfg.train.mask_config(x.height, x.width), kSampleMasks, rng);
  fs::create_directories(dir);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "mask_%05zu.png", i);
    write_png(dir / name, mask_to_png(masks[i]));
  }
}

int run_train(const TrainArgs& a) {
  const fs::path out(a.out);
  const fs::path ckpt_path = out / "checkpoint.bin";
  const fs::path metrics_path = out / "metrics.jsonl";

  RunConfig cfg;
  std::optional<Checkpoint> resume_from;
  if (a.resume) {
    resume_from = load_checkpoint(ckpt_path);
    const auto it = resume_from->texts.find("run_config");
    if (it == resume_from->texts.end()) throw IntegrityError("checkpoint has no run_config");
    cfg = run_config_from_json(json::parse(it->second));
  } else {
    cfg = resolve_train_config(a);
  }

  const auto [train, test] = load_run_datasets(cfg);
  Trainer trainer(cfg.train, train, test);

  fs::create_directories(out);
  std::vector<std::string> kept;
  if (resume_from) {
    trainer.restore(*resume_from);
    kept = read_lines(metrics_path, static_cast<std::size_t>(trainer.epochs_done()));
    if (kept.size() != static_cast<std::size_t>(trainer.epochs_done()))
      throw IntegrityError("metrics.jsonl is shorter than the checkpoint epoch count");
  } else {
    write_text(out / "manifest.json", make_manifest(cfg, out).dump(2) + "\n");
    write_sample_masks(cfg, trainer, out / "masks");
  }
  {
    std::ofstream metrics(metrics_path, std::ios::trunc);
    for (const auto& line : kept) metrics << line << "\n";
  }

  const std::string run_json = to_json(cfg).dump();
  EpochMetrics last;
  last.teacher_err = trainer.teacher_error();
  last.student_err = trainer.student_error();
  while (!trainer.finished()) {
    if (a.stop_after > 0 && trainer.epochs_done() >= a.stop_after) break;
    last = trainer.train_epoch();
    {
      std::ofstream metrics(metrics_path, std::ios::app);
      metrics << last.to_json_line() << "\n";
      if (!metrics) throw DataError(DataErrorKind::io, "cannot append to " + metrics_path.string());
    }
    Checkpoint ckpt = trainer.checkpoint();
    ckpt.texts["run_config"] = run_json;
    save_checkpoint(ckpt_path, ckpt);
    std::cerr << last.to_json_line() << "\n";
  }

  json summary;
  summary["epochs"] = trainer.epochs_done();
  summary["finished"] = trainer.finished();
  summary["teacher_err"] = last.teacher_err;
  summary["student_err"] = last.student_err;
  std::cout << summary.dump() << "\n";
  return kOk;
}

// --------------------------------------------------------------------- eval

int run_eval(const std::string& checkpoint, const std::string& dataset) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const auto it = ckpt.texts.find("run_config");
  if (it == ckpt.texts.end()) throw IntegrityError("checkpoint has no run_config");
  RunConfig cfg = run_config_from_json(json::parse(it->second));
  const auto data = load_run_datasets(cfg);
  Trainer trainer(cfg.train, data.first, data.second);
  trainer.restore(ckpt);

  const ImageBatch* test = &trainer.test_set();
  ImageBatch other;
  if (!dataset.empty()) {
    RunConfig alt = cfg;
    alt.dataset = dataset;
    other = normalize(to_unit_range(load_run_datasets(alt).second), trainer.norm_stats());
    test = &other;
  }
  json report;
  report["epochs"] = trainer.epochs_done();
  report["test_samples"] = test->n;
  report["teacher_err"] = evaluate(trainer.models().teacher, *test);
  report["student_err"] = evaluate(trainer.models().student, *test);
  std::cout << report.dump() << "\n";
  return kOk;
}

// --------------------------------------------------------- export-synthetic

int run_export_synthetic(const SyntheticSpec& spec, std::uint64_t seed, const std::string& out) {
  spec.validate();
  const auto [train, test] = make_synthetic(spec, seed);
  const fs::path dir(out);
  fs::create_directories(dir);
  save_idx(train, dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  save_idx(test, dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
  std::cout << json{{"train", train.labels.size()}, {"test", test.labels.size()}}.dump() << "\n";
  return kOk;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const json::exception& e) {
    std::cerr << "json error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CowMask mask generation and semi-supervised training"};
  app.set_version_flag("--version", COWMASK_VERSION);
  app.require_subcommand(1);

  GenMasksArgs gm;
  auto* gen = app.add_subcommand("gen-masks", "Write masks as PNG plus stats.json");
  gen->add_option("--kind", gm.kind, "cow | box | constant")->check(CLI::IsMember({"cow", "box", "constant"}));
  gen->add_option("--size", gm.size, "Mask height and width");
  gen->add_option("--sigma", gm.sigma, "Cow mask sigma range LO HI")->expected(2);
  gen->add_option("--p", gm.p, "Cow mask proportion range LO HI")->expected(2);
  gen->add_option("--area", gm.area, "Box area fraction range LO HI")->expected(2);
  gen->add_option("--beta", gm.beta, "Constant mask Beta(b, b) parameter");
  gen->add_option("-n,--count", gm.count, "Number of masks");
  gen->add_option("--seed", gm.seed, "Batch seed");
  gen->add_option("--workers", gm.workers, "Worker threads (0 = all cores)");
  gen->add_option("--out", gm.out, "Output directory");

  BenchArgs bm;
  auto* bench = app.add_subcommand("bench", "Mask throughput and filter speed report");
  bench->add_option("--sizes", bm.sizes, "Mask sizes");
  bench->add_option("--sigma", bm.sigma, "Sigma range LO HI")->expected(2);
  bench->add_option("-n,--count", bm.count, "Masks per grid cell");
  bench->add_option("--workers", bm.workers, "Worker count for the parallel run (0 = all cores)");
  bench->add_option("--seed", bm.seed, "Batch seed");
  bench->add_option("--filter-size", bm.filter_size, "Image size for the filter timing");
  bench->add_option("--filter-sigma", bm.filter_sigma, "Sigma for the filter timing");
  bench->add_flag("--skip-direct", bm.skip_direct, "Skip the direct 2D filter timing");
  bench->add_option("--json", bm.json_out, "Write the report here instead of stdout");

  TrainArgs tm;
  auto* train = app.add_subcommand("train", "Train a teacher/student pair");
  auto flag = [&](const std::string& name, const std::string& key, const std::string& help) {
    train->add_option_function<std::string>(
        name, [&tm, key](const std::string& v) { tm.flags.insert(tm.flags.end(), {key, v}); }, help)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  };
  auto pair_flag = [&](const std::string& name, const std::string& lo, const std::string& hi,
                       const std::string& help) {
    train
        ->add_option_function<std::vector<std::string>>(
            name,
            [&tm, lo, hi](const std::vector<std::string>& v) {
              tm.flags.insert(tm.flags.end(), {lo, v[0], hi, v[1]});
            },
            help)
        ->expected(2);
  };
  flag("--mode", "mode", "supervised_only | cowout | cowmix | randerase | cutmix | ict");
  pair_flag("--sigma", "sigma_min", "sigma_max", "Mask sigma range LO HI");
  pair_flag("--p", "p_min", "p_max", "Mask proportion range LO HI");
  flag("--omega", "omega", "Unsupervised loss weight");
  flag("--psi", "psi", "Confidence threshold");
  flag("--alpha", "alpha", "Teacher EMA momentum");
  flag("--labels", "labels", "Number of labeled samples");
  flag("--epochs", "epochs", "Training epochs");
  flag("--batch-size", "batch_size", "Batch size");
  flag("--lr", "lr", "Learning rate");
  flag("--seed", "seed", "Run seed");
  flag("--dataset", "dataset", "synthetic | idx:DIR | cifar:DIR");
  train->add_flag_callback("--synthetic", [&tm] { tm.flags.insert(tm.flags.end(), {"dataset", "synthetic"}); },
                           "Use the generated synthetic dataset");
  std::vector<std::string> overrides;
  train->add_option("--set", overrides, "Any config key as KEY=VALUE (repeatable, applied after the named flags)");
  train->add_option("--config", tm.config_file, "key = value config file");
  train->add_option("--manifest", tm.manifest, "Reproduce the run recorded in a manifest.json");
  train->add_option("--out", tm.out, "Output directory");
  train->add_flag("--resume", tm.resume, "Continue from OUT/checkpoint.bin");
  train->add_option("--stop-after", tm.stop_after, "Stop after this many epochs (0 = run to the end)");

  std::string eval_ckpt;
  std::string eval_dataset;
  auto* eval = app.add_subcommand("eval", "Teacher and student test error of a checkpoint");
  eval->add_option("checkpoint", eval_ckpt, "checkpoint.bin")->required();
  eval->add_option("--dataset", eval_dataset, "Evaluate on another test set");

  SyntheticSpec sm;
  std::uint64_t export_seed = 0;
  std::string export_out = "synthetic_idx";
  auto* exp = app.add_subcommand("export-synthetic", "Write the synthetic dataset as IDX files");
  exp->add_option("--classes", sm.classes);
  exp->add_option("--size", sm.size);
  exp->add_option("--train", sm.train_count);
  exp->add_option("--test", sm.test_count);
  exp->add_option("--noise", sm.noise_level);
  exp->add_option("--contrast", sm.contrast);
  exp->add_option("--seed", export_seed, "Dataset seed");
  exp->add_option("--out", export_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "--set expects KEY=VALUE, got " << kv << "\n";
      return kUsage;
    }
    tm.flags.insert(tm.flags.end(), {kv.substr(0, eq), kv.substr(eq + 1)});
  }

  if (*gen) return guarded([&] { return run_gen_masks(gm); });
  if (*bench) return guarded([&] { return run_bench(bm); });
  if (*train) return guarded([&] { return run_train(tm); });
  if (*eval) return guarded([&] { return run_eval(eval_ckpt, eval_dataset); });
  if (*exp) return guarded([&] { return run_export_synthetic(sm, export_seed, export_out); });
  return kUsage;
}
