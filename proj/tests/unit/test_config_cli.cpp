#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "haft/cli.hpp"
#include "haft/config.hpp"
#include "haft/errors.hpp"
#include "haft/tracker.hpp"

namespace haft {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("haft_cli_" + name);
  fs::remove_all(p);
  return p;
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Small enough that one training step and a 10-frame track take well under a second.
const std::vector<std::string> kTiny = {
    "--set", "model.channels=4,6,6,6", "--set", "model.disc_width=6",        "--set", "model.patch_size=32",
    "--set", "model.context_factor=3", "--set", "model.filter_size=3",        "--set", "train.clip_length=3",
    "--set", "train.batch_size=1",     "--set", "train.iterations_per_epoch=1", "--set", "train.epochs=1",
    "--set", "synth.sequences=2",      "--set", "synth.length=10",            "--set", "synth.width=64",
    "--set", "synth.height=64",        "--set", "eval.sequences=1",           "--set", "eval.length=10",
    "--set", "eval.occluders=4:6:1",   "--set", "track.candidates=3",         "--set", "track.init_filter_iters=2"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTiny.begin(), kTiny.end());
  return args;
}

TEST(Config, DefaultsParseAndConvert) {
  const Config c;
  EXPECT_NO_THROW(synth_config(c));
  EXPECT_NO_THROW(model_config(c));
  EXPECT_NO_THROW(track_config(c));
  const TrainConfig t = train_config(c);
  EXPECT_EQ(t.clip_length, 16);
  EXPECT_EQ(t.batch_size, 4);
  EXPECT_EQ(t.total_iterations(), 2000);
  EXPECT_DOUBLE_EQ(track_config(c).lambda_fuse, 0.2);
}

TEST(Config, ParseReportsLine) {
  try {
    Config::parse("seed = 3\n# note\nnot an assignment\n", "x.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:3"), std::string::npos) << e.what();
  }
  const Config c = Config::parse("seed = 3  # trailing\n\ntrain.lr=0.5\n", "y.cfg");
  EXPECT_EQ(c.get_u64("seed"), 3u);
  EXPECT_DOUBLE_EQ(c.get_double("train.lr"), 0.5);
}

TEST(Config, UnknownKeySuggestsNearest) {
  Config c;
  try {
    c.set("trian.lr", "1");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.lr"), std::string::npos) << e.what();
  }
}

TEST(Config, BadValuesRejected) {
  Config c;
  c.set("train.batch_size", "two");
  EXPECT_THROW(train_config(c), ConfigError);
  Config d;
  d.set("track.size_rate", "1.5");
  EXPECT_THROW(track_config(d), ConfigError);
  Config e;
  e.set("model.strides", "2,2");
  EXPECT_THROW(model_config(e), ConfigError);
}

TEST(Config, WriteLoadRoundTrip) {
  const fs::path dir = scratch("roundtrip");
  fs::create_directories(dir);
  Config c;
  c.set("seed", "17");
  c.set("eval.lambdas", "0,0.5");
  c.write(dir / "c.txt");
  const Config back = Config::load(dir / "c.txt");
  EXPECT_EQ(back.values(), c.values());
  EXPECT_THROW(Config::load(dir / "missing.txt"), ConfigError);
}

TEST(Cli, UnknownKeyExitsWithConfigError) {
  const fs::path out = scratch("unknown");
  const CliRun r = run({"synth", "--out", out.string(), "--set", "trian.lr=1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("train.lr"), std::string::npos) << r.err;
}

TEST(Cli, MissingSubcommandOrFlagIsConfigError) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"track", "--out", "x.csv"}).code, 2);
}

TEST(Cli, SynthIsDeterministic) {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  ASSERT_EQ(run(with_tiny({"synth", "--out", a.string(), "--seed", "5"})).code, 0);
  ASSERT_EQ(run(with_tiny({"synth", "--out", b.string(), "--seed", "5"})).code, 0);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 10u);
  EXPECT_TRUE(fs::exists(a / "resolved_config.txt"));
  EXPECT_TRUE(fs::exists(a / "train"));
  EXPECT_TRUE(fs::exists(a / "eval"));
}

TEST(Cli, MissingCheckpointIsDataError) {
  const fs::path out = scratch("nock");
  const CliRun r = run({"track", "--out", (out / "t.csv").string(), "--checkpoint", (out / "nothing").string(),
                     "--sequence", (out / "seq").string()});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Cli, TrainTrackEvalPipeline) {
  const fs::path root = scratch("pipeline");
  ASSERT_EQ(run(with_tiny({"synth", "--out", (root / "data").string(), "--split", "eval"})).code, 0);
  const CliRun t = run(with_tiny({"train", "--out", (root / "model").string()}));
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(root / "model" / "checkpoint" / "manifest.json"));
  EXPECT_TRUE(fs::exists(root / "model" / "train_log.csv"));
  EXPECT_TRUE(fs::exists(root / "model" / "resolved_config.txt"));

  fs::path seq;
  for (const auto& e : fs::directory_iterator(root / "data" / "eval")) seq = e.path();
  ASSERT_FALSE(seq.empty());
  const fs::path csv = root / "tracks" / (seq.filename().string() + ".csv");
  const CliRun k = run(with_tiny({"track", "--out", csv.string(), "--checkpoint", (root / "model" / "checkpoint").string(),
                               "--sequence", seq.string()}));
  ASSERT_EQ(k.code, 0) << k.err;
  EXPECT_EQ(read_tracking_csv(csv).boxes.size(), 10u);
  EXPECT_TRUE(fs::exists(root / "tracks" / "resolved_config.txt"));

  const CliRun e = run(with_tiny({"eval", "--out", (root / "report").string(), "--data", (root / "data" / "eval").string(),
                               "--tracks", (root / "tracks").string()}));
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_TRUE(fs::exists(root / "report" / "summary.csv"));
  EXPECT_TRUE(fs::exists(root / "report" / "success.png"));
}

}  // namespace
}  // namespace haft
