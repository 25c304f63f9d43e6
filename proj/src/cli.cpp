#include "wdci/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>

#include "CLI11.hpp"
#include "wdci/config.hpp"
#include "wdci/errors.hpp"
#include "wdci/image_io.hpp"
#include "wdci/wavelet.hpp"

WDCI_NAMESPACE_BEGIN

namespace fs = std::filesystem;

std::vector<LowNormalPair> synthetic_lowlight_pairs(int count, int size, std::uint64_t seed) {
  DegradationRanges r;
  r.gain_min = 0.1;
  r.gain_max = 0.3;
  r.read_noise_min = 0.002;
  r.read_noise_max = 0.005;
  r.shot_noise_min = 0.001;
  r.shot_noise_max = 0.003;
  std::vector<LowNormalPair> pairs;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed * 1000003ull + static_cast<std::uint64_t>(i);
    const Tensor normal = synthesize_scene(size, size, s).left;
    const auto params = DegradationParams::sample(s, false, size, size, r);
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%04d", i);
    pairs.push_back({id, degrade({normal, normal}, params).left, normal});
  }
  return pairs;
}

std::vector<LowNormalPair> read_lowlight_pairs(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IngestionError("input directory not found: " + dir);
  std::set<std::string> lows, normals;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    auto strip = [&](const std::string& suffix, std::set<std::string>& into) {
      if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        into.insert(name.substr(0, name.size() - suffix.size()));
      }
    };
    strip("_low.png", lows);
    strip("_normal.png", normals);
  }
  std::string offenders;
  for (const auto& id : lows)
    if (!normals.count(id)) offenders += " " + id + "_normal.png";
  for (const auto& id : normals)
    if (!lows.count(id)) offenders += " " + id + "_low.png";
  if (!offenders.empty()) throw IngestionError("missing counterpart images in " + dir + ":" + offenders);
  std::vector<LowNormalPair> pairs;
  for (const auto& id : lows) {
    LowNormalPair p{id, read_png((fs::path(dir) / (id + "_low.png")).string()),
                    read_png((fs::path(dir) / (id + "_normal.png")).string())};
    if (p.low.shape() != p.normal.shape()) throw IngestionError("pair '" + id + "': image sizes differ");
    pairs.push_back(std::move(p));
  }
  return pairs;
}

LfswapRow lfswap_pair(const LowNormalPair& pair, int levels) {
  const auto [s_normal, s_low] = low_frequency_exchange(pair.low, pair.normal, levels);
  return {pair.id, levels, psnr(s_normal, pair.normal), psnr(s_low, pair.normal), psnr(pair.low, pair.normal)};
}

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> sets;
  std::vector<std::string> ablations;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Flat key=value config file");
  cmd->add_option("--seed", c.seed, "Seed overriding the config");
  cmd->add_option("--out", c.out_dir, "Output directory (default: $WDCI_OUT or ./wdci_out)");
  cmd->add_option("--set", c.sets, "Config override key=value (repeatable)");
  cmd->add_option("--ablate", c.ablations, "Ablation variant (repeatable)");
}

std::string default_out() {
  const char* env = std::getenv("WDCI_OUT");
  return env && *env ? std::string(env) : std::string("wdci_out");
}

/// Builds the run config and persists it before any work.
RunConfig resolve(Common& c, const std::string& command, const std::vector<std::string>& notes = {}) {
  RunConfig cfg;
  if (!c.config_path.empty()) apply_config_file(cfg, c.config_path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& a : c.ablations) apply_ablation(cfg.train, a);
  if (c.seed) cfg.train.seed = *c.seed;
  if (c.out_dir.empty()) c.out_dir = default_out();
  fs::create_directories(c.out_dir);
  std::ofstream out(fs::path(c.out_dir) / "resolved_config.txt", std::ios::trunc);
  if (!out) throw IoError("cannot write to output directory " + c.out_dir);
  out << "# command=" << command << "\n";
  for (const auto& n : notes) out << "# " << n << "\n";
  out << resolved_config(cfg);
  return cfg;
}

Dataset load_dataset(const RunConfig& cfg) {
  if (!cfg.data_dir.empty()) {
    if (!fs::is_directory(cfg.data_dir)) throw IngestionError("dataset directory not found: " + cfg.data_dir);
    return build_dataset(cfg.data_dir, cfg.manifest, cfg.dataset_options());
  }
  if (cfg.synthetic_pairs > 0) {
    return synthetic_dataset(cfg.synthetic_pairs, cfg.synthetic_size, cfg.synthetic_size, cfg.dataset_options());
  }
  throw ConfigError("no dataset: set data_dir or synthetic_pairs");
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

int cmd_train(Common& c, const std::string& data, std::ostream& out) {
  RunConfig cfg = resolve(c, "train");
  if (!data.empty()) cfg.data_dir = data;
  cfg.train.out_dir = c.out_dir;
  const Dataset ds = load_dataset(cfg);
  out << "training on " << ds.train.size() << " pairs (" << ds.val.size() << " val), net hash "
      << hash_hex(cfg.train.net.hash()) << "\n";
  const CheckpointSeries s = train(cfg.train, ds, &out);
  out << "best epoch " << s.best_epoch << ": " << s.best_path << "\nlast: " << s.last_path << "\n";
  return kExitOk;
}

int cmd_enhance(Common& c, const std::string& ckpt, const std::string& left, const std::string& right,
                std::ostream& out) {
  resolve(c, "enhance", {"checkpoint=" + ckpt, "left=" + left, "right=" + right});
  if (left.empty() || right.empty()) {
    throw ArgumentError("enhance needs both --left and --right: the network is stereo-only");
  }
  const auto net = load_checkpoint(ckpt);
  const Tensor l = read_png(left), r = read_png(right);
  if (l.shape() != r.shape()) {
    throw ArgumentError("left " + l.shape().str() + " and right " + r.shape().str() + " sizes differ");
  }
  const StereoPair e = enhance(*net, l, r);
  const std::string lo = (fs::path(c.out_dir) / (stem(left) + "_enhanced.png")).string();
  const std::string ro = (fs::path(c.out_dir) / (stem(right) + "_enhanced.png")).string();
  write_png(lo, e.left);
  write_png(ro, e.right);
  out << lo << "\n" << ro << "\n";
  return kExitOk;
}

int cmd_evaluate(Common& c, const std::string& ckpt, const std::string& data, std::optional<double> threshold,
                 std::ostream& out) {
  RunConfig cfg = resolve(c, "evaluate", {"checkpoint=" + ckpt});
  if (!data.empty()) cfg.data_dir = data;
  if (threshold) cfg.mse_threshold = *threshold;
  const Dataset ds = load_dataset(cfg);
  WdciNet net(cfg.train.net, 0);
  load_into(ckpt, net);
  const fs::path maps = fs::path(c.out_dir) / "mse_maps";
  fs::create_directories(maps);
  MetricsTable table;
  for (const auto* split : {&ds.train, &ds.val}) {
    for (const auto& s : *split) {
      const StereoPair e = enhance(net, s.low_left, s.low_right);
      table.add(s.id, e.left, e.right, s.gt_left, s.gt_right);
      write_png((maps / (s.id + "_L.png")).string(), mse_binary_map(e.left, s.gt_left, cfg.mse_threshold));
      write_png((maps / (s.id + "_R.png")).string(), mse_binary_map(e.right, s.gt_right, cfg.mse_threshold));
    }
  }
  table.write_csv((fs::path(c.out_dir) / "metrics.csv").string());
  table.print(out);
  return kExitOk;
}

int cmd_lfswap(Common& c, const std::string& input, int synthetic, int size, std::ostream& out) {
  RunConfig cfg = resolve(c, "lfswap", {"input=" + input, "synthetic=" + std::to_string(synthetic)});
  std::vector<LowNormalPair> pairs =
      input.empty() ? synthetic_lowlight_pairs(synthetic, size, cfg.train.seed) : read_lowlight_pairs(input);
  std::ofstream csv(fs::path(c.out_dir) / "lfswap.csv", std::ios::trunc);
  csv << "pair_id,levels,psnr_s_normal_vs_normal,psnr_s_low_vs_normal,psnr_low_vs_normal\n" << std::setprecision(10);
  std::ofstream summary(fs::path(c.out_dir) / "lfswap_summary.txt", std::ios::trunc);
  bool ordered = true;
  for (int levels = 1; levels <= 3; ++levels) {
    double sn = 0, sl = 0, lo = 0;
    for (const auto& p : pairs) {
      const LfswapRow r = lfswap_pair(p, levels);
      csv << r.pair_id << ',' << r.levels << ',' << r.psnr_s_normal << ',' << r.psnr_s_low << ',' << r.psnr_low
          << '\n';
      sn += r.psnr_s_normal;
      sl += r.psnr_s_low;
      lo += r.psnr_low;
    }
    if (pairs.empty()) continue;
    const double n = static_cast<double>(pairs.size());
    std::ostringstream line;
    line << std::fixed << std::setprecision(3) << "L=" << levels << " pairs=" << pairs.size()
         << " mean PSNR(s_normal,normal)=" << sn / n << " mean PSNR(s_low,normal)=" << sl / n
         << " mean PSNR(low,normal)=" << lo / n << (sn > sl ? " ordering=ok" : " ordering=VIOLATED");
    if (!(sn > sl)) ordered = false;
    out << line.str() << "\n";
    summary << line.str() << "\n";
  }
  if (pairs.empty()) {
    out << "no pairs found\n";
    summary << "no pairs found\n";
  }
  return ordered ? kExitOk : kExitFailure;
}

int cmd_ablate(Common& c, int steps, std::ostream& out) {
  RunConfig cfg = resolve(c, "ablate");
  if (cfg.data_dir.empty() && cfg.synthetic_pairs == 0) {
    cfg.synthetic_pairs = std::max(2, cfg.train.batch_size);
    cfg.synthetic_size = cfg.train.crop_size;
  }
  const Dataset ds = load_dataset(cfg);
  std::ofstream csv(fs::path(c.out_dir) / "ablation.csv", std::ios::trunc);
  csv << "variant,config_hash,param_count,steps,loss_total,outputs_valid\n" << std::setprecision(10);
  const std::size_t base_count = WdciNet(cfg.train.net, cfg.train.seed).params().scalar_count();
  bool ok = true;
  std::vector<std::string> variants = {"baseline"};
  for (const auto& n : ablation_names()) variants.push_back(n);
  for (const auto& v : variants) {
    TrainConfig t = cfg.train;
    if (v != "baseline") apply_ablation(t, v);
    t.out_dir.clear();
    t.epochs = 1;
    t.max_steps = steps;
    WdciNet net(t.net, t.seed);
    const std::size_t count = net.params().scalar_count();
    const CheckpointSeries s = train(t, ds, nullptr);
    const auto& probe = ds.train.front();
    const StereoPair e = enhance(*s.last, probe.low_left, probe.low_right);
    const bool valid = e.left.all_finite() && e.right.all_finite() && e.left.shape() == probe.gt_left.shape();
    const bool structural = t.net.hash() != cfg.train.net.hash();
    const bool count_ok = structural ? count < base_count : count == base_count;
    ok = ok && valid && count_ok;
    csv << v << ',' << hash_hex(t.net.hash()) << ',' << count << ',' << s.step_losses.size() << ','
        << s.step_losses.back() << ',' << (valid ? "true" : "false") << '\n';
    out << std::left << std::setw(22) << v << " params=" << count << " loss=" << s.step_losses.back()
        << (valid && count_ok ? "" : "  FAILED") << "\n";
  }
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"wdci: wavelet-decoupled stereo low-light enhancement"};
  app.require_subcommand(1);

  Common common;
  std::string data, ckpt, left, right, input;
  std::optional<double> threshold;
  int synthetic = 20, size = 64, steps = 1;

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(train_cmd, common);
  train_cmd->add_option("--data", data, "Directory of {id}_L.png / {id}_R.png ground-truth pairs");

  auto* enhance_cmd = app.add_subcommand("enhance", "Enhance one stereo pair");
  add_common(enhance_cmd, common);
  enhance_cmd->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  enhance_cmd->add_option("--left", left, "Left view PNG");
  enhance_cmd->add_option("--right", right, "Right view PNG");

  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data, "Directory of ground-truth pairs");
  eval_cmd->add_option("--threshold", threshold, "MSE threshold of the binary error maps");

  auto* lf_cmd = app.add_subcommand("lfswap", "Low-frequency exchange experiment");
  add_common(lf_cmd, common);
  lf_cmd->add_option("--input", input, "Directory of {id}_low.png / {id}_normal.png pairs");
  lf_cmd->add_option("--synthetic", synthetic, "Number of procedural pairs when no --input is given");
  lf_cmd->add_option("--size", size, "Side of procedural pairs");

  auto* ablate_cmd = app.add_subcommand("ablate", "Run every ablation variant for a few steps");
  add_common(ablate_cmd, common);
  ablate_cmd->add_option("--steps", steps, "Optimizer steps per variant")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(common, data, out);
    if (*enhance_cmd) return cmd_enhance(common, ckpt, left, right, out);
    if (*eval_cmd) return cmd_evaluate(common, ckpt, data, threshold, out);
    if (*lf_cmd) return cmd_lfswap(common, input, synthetic, size, out);
    if (*ablate_cmd) return cmd_ablate(common, steps, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IngestionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

WDCI_NAMESPACE_END
