#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "wdci/cli.hpp"
#include "wdci/config.hpp"
#include "wdci/errors.hpp"
#include "wdci/image_io.hpp"
#include "wdci/losses.hpp"
#include "wdci/wavelet.hpp"

using namespace wdci;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "wdci");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Small enough for one CPU core.
const std::vector<std::string> kTiny = {"--set", "synthetic_pairs=3", "--set", "synthetic_size=16",
                                        "--set", "crop_size=16",      "--set", "channels=4",
                                        "--set", "epochs=1",          "--set", "val_fraction=0.34"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

}  // namespace

TEST_CASE("resolved config round-trips") {
  RunConfig a;
  set_config_key(a, "lr_initial", "0.00031");
  set_config_key(a, "use_dtem", "false");
  set_config_key(a, "data_dir", "/x/y");
  set_config_key(a, "perceptual_weight", "0.25");
  RunConfig b;
  apply_config_text(b, resolved_config(a));
  CHECK(resolved_config(a) == resolved_config(b));
  CHECK(b.train.lr_initial == 0.00031);
  CHECK_FALSE(b.train.net.use_dtem);
  CHECK(config_keys().size() == lines(resolved_config(a)).size());
}

TEST_CASE("config errors name the key") {
  RunConfig c;
  try {
    set_config_key(c, "learning_rate", "1");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
  }
  try {
    set_config_key(c, "epochs", "many");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("epochs") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_config_text(c, "epochs 3\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_file(c, "/nonexistent/cfg.txt"), ConfigError);
  apply_config_text(c, "# comment\n\npreset = full  # trailing\n");
  CHECK(c.train.batch_size == 20);
  CHECK(c.train.crop_size == 128);
}

TEST_CASE("usage errors exit 2") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"train", "--set", "nokey=1", "--out", testing::temp_dir("cli_badkey").string()}).code == kExitUsage);
  CHECK(cli({"train", "--ablate", "no-such", "--out", testing::temp_dir("cli_badabl").string()}).code ==
        kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("missing dataset path exits 2 and names the path") {
  const Run r = cli({"train", "--data", "/no/such/dir", "--out", testing::temp_dir("cli_nodata").string()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("/no/such/dir") != std::string::npos);
}

TEST_CASE("train: same seed gives identical logs, artifacts and resolved config") {
  const fs::path a = testing::temp_dir("cli_train_a"), b = testing::temp_dir("cli_train_b");
  REQUIRE(cli(with({"train", "--seed", "4", "--out", a.string()}, kTiny)).code == kExitOk);
  REQUIRE(cli(with({"train", "--seed", "4", "--out", b.string()}, kTiny)).code == kExitOk);
  CHECK(slurp(a / "train_log.jsonl") == slurp(b / "train_log.jsonl"));
  CHECK(fs::exists(a / "best.ckpt"));
  CHECK(fs::exists(a / "last.ckpt"));
  const std::string cfg = slurp(a / "resolved_config.txt");
  CHECK(cfg.find("# command=train") != std::string::npos);
  CHECK(cfg.find("seed=4\n") != std::string::npos);
  CHECK(cfg.find("channels=4\n") != std::string::npos);

  const fs::path c = testing::temp_dir("cli_train_c");
  REQUIRE(cli(with({"train", "--seed", "5", "--out", c.string()}, kTiny)).code == kExitOk);
  CHECK(slurp(a / "train_log.jsonl") != slurp(c / "train_log.jsonl"));
}

TEST_CASE("ablate flag changes the recorded configuration hash") {
  const fs::path a = testing::temp_dir("cli_abl_a"), b = testing::temp_dir("cli_abl_b");
  const Run base = cli(with({"train", "--out", a.string()}, kTiny));
  const Run abl = cli(with({"train", "--ablate", "no-hf-cim", "--out", b.string()}, kTiny));
  REQUIRE(base.code == kExitOk);
  REQUIRE(abl.code == kExitOk);
  auto hash_of = [](const std::string& s) { return s.substr(s.find("net hash ") + 9, 16); };
  CHECK(hash_of(base.out) != hash_of(abl.out));
  CHECK(slurp(b / "resolved_config.txt").find("use_hf_cim=false") != std::string::npos);
}

TEST_CASE("enhance, evaluate and their failure modes") {
  const fs::path train_dir = testing::temp_dir("cli_ee_train");
  REQUIRE(cli(with({"train", "--out", train_dir.string()}, kTiny)).code == kExitOk);
  const std::string ckpt = (train_dir / "best.ckpt").string();

  const fs::path in = testing::temp_dir("cli_ee_in");
  write_png((in / "scene_L.png").string(), testing::random_tensor({1, 3, 123, 250}, 1, 0, 0.3));
  write_png((in / "scene_R.png").string(), testing::random_tensor({1, 3, 123, 250}, 2, 0, 0.3));
  const std::string l = (in / "scene_L.png").string(), r = (in / "scene_R.png").string();

  const fs::path o1 = testing::temp_dir("cli_ee_o1"), o2 = testing::temp_dir("cli_ee_o2");
  REQUIRE(cli({"enhance", "--checkpoint", ckpt, "--left", l, "--right", r, "--out", o1.string()}).code == kExitOk);
  REQUIRE(cli({"enhance", "--checkpoint", ckpt, "--left", l, "--right", r, "--out", o2.string()}).code == kExitOk);
  const Tensor e = read_png((o1 / "scene_L_enhanced.png").string());
  CHECK(e.shape() == Shape{1, 3, 123, 250});
  CHECK(slurp(o1 / "scene_L_enhanced.png") == slurp(o2 / "scene_L_enhanced.png"));
  CHECK(slurp(o1 / "scene_R_enhanced.png") == slurp(o2 / "scene_R_enhanced.png"));

  const Run single = cli({"enhance", "--checkpoint", ckpt, "--left", l, "--out", o1.string()});
  CHECK(single.code == kExitUsage);
  CHECK(single.err.find("stereo") != std::string::npos);
  CHECK(cli({"enhance", "--left", l, "--right", r, "--out", o1.string()}).code == kExitUsage);

  const fs::path ev = testing::temp_dir("cli_ee_eval");
  REQUIRE(cli(with({"evaluate", "--checkpoint", ckpt, "--out", ev.string(), "--threshold", "0.02"}, kTiny)).code ==
          kExitOk);
  const auto rows = lines(slurp(ev / "metrics.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "id,psnr_left,psnr_right,ssim_left,ssim_right");
  CHECK(fs::exists(ev / "mse_maps" / "synth_0000_L.png"));
  CHECK(fs::exists(ev / "mse_maps" / "synth_0002_R.png"));
  CHECK(slurp(ev / "resolved_config.txt").find("mse_threshold=") != std::string::npos);

  // The default net does not match the tiny checkpoint.
  const Run mismatch = cli({"evaluate", "--checkpoint", ckpt, "--set", "synthetic_pairs=2", "--set",
                            "synthetic_size=16", "--out", ev.string()});
  CHECK(mismatch.code == kExitUsage);
  CHECK(mismatch.err.find("hash") != std::string::npos);
}

TEST_CASE("lfswap on an empty directory writes only the header") {
  const fs::path in = testing::temp_dir("cli_lf_empty"), out = testing::temp_dir("cli_lf_empty_out");
  const Run r = cli({"lfswap", "--input", in.string(), "--out", out.string()});
  CHECK(r.code == kExitOk);
  const auto rows = lines(slurp(out / "lfswap.csv"));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0] == "pair_id,levels,psnr_s_normal_vs_normal,psnr_s_low_vs_normal,psnr_low_vs_normal");
}

TEST_CASE("lfswap from files covers three levels per pair") {
  const fs::path in = testing::temp_dir("cli_lf_in"), out = testing::temp_dir("cli_lf_out");
  for (int i = 0; i < 3; ++i) {
    const auto p = synthetic_lowlight_pairs(1, 32, 10 + i).front();
    write_png((in / ("p" + std::to_string(i) + "_low.png")).string(), p.low);
    write_png((in / ("p" + std::to_string(i) + "_normal.png")).string(), p.normal);
  }
  const Run r = cli({"lfswap", "--input", in.string(), "--out", out.string()});
  CHECK(r.code == kExitOk);
  const auto rows = lines(slurp(out / "lfswap.csv"));
  REQUIRE(rows.size() == 1 + 9);
  std::map<std::string, std::set<int>> levels;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c1 = rows[i].find(','), c2 = rows[i].find(',', c1 + 1);
    levels[rows[i].substr(0, c1)].insert(std::stoi(rows[i].substr(c1 + 1, c2 - c1 - 1)));
  }
  REQUIRE(levels.size() == 3);
  for (const auto& [id, ls] : levels) CHECK(ls == std::set<int>{1, 2, 3});
  CHECK(slurp(out / "lfswap_summary.txt").find("L=3") != std::string::npos);

  write_png((in / "orphan_low.png").string(), testing::random_tensor({1, 3, 8, 8}, 3, 0, 1));
  const Run bad = cli({"lfswap", "--input", in.string(), "--out", out.string()});
  CHECK(bad.code == kExitUsage);
  CHECK(bad.err.find("orphan_normal.png") != std::string::npos);
}

TEST_CASE("lfswap pair oracle") {
  const auto p = synthetic_lowlight_pairs(1, 32, 3).front();
  const LfswapRow row = lfswap_pair(p, 2);
  const auto [s_normal, s_low] = low_frequency_exchange(p.low, p.normal, 2);
  CHECK(row.psnr_s_normal == doctest::Approx(psnr(s_normal, p.normal)));
  CHECK(row.psnr_s_low == doctest::Approx(psnr(s_low, p.normal)));
  CHECK(row.psnr_low == doctest::Approx(psnr(p.low, p.normal)));
}

TEST_CASE("ablate subcommand reports every variant") {
  const fs::path out = testing::temp_dir("cli_ablate");
  const Run r = cli({"ablate", "--set", "channels=4", "--set", "crop_size=16", "--out", out.string()});
  CHECK(r.code == kExitOk);
  const auto rows = lines(slurp(out / "ablation.csv"));
  CHECK(rows.size() == 2 + ablation_names().size());
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].find(",true") != std::string::npos);
}

TEST_CASE("default output directory comes from WDCI_OUT") {
  const fs::path dir = testing::temp_dir("cli_env");
  ::setenv("WDCI_OUT", dir.string().c_str(), 1);
  const Run r = cli({"lfswap", "--synthetic", "2", "--size", "16"});
  ::unsetenv("WDCI_OUT");
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(dir / "lfswap.csv"));
  CHECK(fs::exists(dir / "resolved_config.txt"));
}

TEST_CASE("installed tool exit codes") {
  const char* tool = std::getenv("WDCI_TOOL");
  if (!tool) {
    MESSAGE("WDCI_TOOL not set; skipping subprocess checks");
    return;
  }
  const fs::path out = testing::temp_dir("cli_tool");
  const std::string base = std::string("\"") + tool + "\" ";
  CHECK(WEXITSTATUS(std::system((base + "lfswap --synthetic 2 --size 16 --out " + out.string() + " >/dev/null").c_str())) == 0);
  CHECK(WEXITSTATUS(std::system((base + "train --data /no/such --out " + out.string() + " 2>/dev/null").c_str())) == 2);
}
