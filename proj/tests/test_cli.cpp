// Spawns the real command-line binary and checks its behavior end to end:
// exit codes (0 ok, 2 usage, 3 io, 4 numeric), output, and written artifacts.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::path("scratch") / ("cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args, const fs::path& scratch) {
  const fs::path out_file = scratch / "stdout.txt";
  const fs::path err_file = scratch / "stderr.txt";
  const std::string cmd = std::string(MGA_CLI_PATH) + " " + args + " > " +
                          out_file.string() + " 2> " + err_file.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

// one corpus + one trained tiny run shared by the slower cases
struct Fixture {
  TempDir dir{"fixture"};
  std::string corpus;
  std::string out;
  std::string train_args;

  Fixture() {
    corpus = (dir.path / "data").string();
    out = (dir.path / "run").string();
    RunResult gen = run("gen-data --out " + corpus +
                            " --clips 40 --frames 12 --events 3 --feat 6 --seed 5",
                        dir.path);
    REQUIRE(gen.exit_code == 0);
    train_args =
        " --set paths.corpus=" + corpus + " --set model.d=8" +
        " --set model.joint_dim=8 --set model.audio_blocks=1" +
        " --set model.text_blocks=1 --set model.codebook_size=8" +
        " --set train.batch=8 --set train.epochs=2";
    RunResult tr = run("train --set paths.out=" + out + train_args, dir.path);
    REQUIRE(tr.exit_code == 0);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("help exits zero, bad input exits two") {
  TempDir dir("usage");
  CHECK(run("--help", dir.path).exit_code == 0);
  CHECK(run("train --help", dir.path).exit_code == 0);
  CHECK(run("no-such-command", dir.path).exit_code == 2);
  CHECK(run("train --no-such-flag", dir.path).exit_code == 2);
  CHECK(run("", dir.path).exit_code == 2);

  // unknown config keys are rejected with the valid ones listed
  RunResult r = run("train --set loss.gama=1", dir.path);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("unknown config key") != std::string::npos);
  CHECK(r.err.find("loss.gamma") != std::string::npos);
}

TEST_CASE("corpus generation is deterministic and validated") {
  TempDir dir("gen");
  const std::string a = (dir.path / "a").string();
  const std::string b = (dir.path / "b").string();
  const std::string args = " --clips 30 --frames 12 --events 3 --feat 6 --seed 9";

  RunResult ra = run("gen-data --out " + a + args, dir.path);
  CHECK(ra.exit_code == 0);
  CHECK(ra.out.find("train") != std::string::npos);
  CHECK(run("gen-data --out " + b + args, dir.path).exit_code == 0);

  // same seed, same bytes
  CHECK(slurp(fs::path(a) / "manifest.json") == slurp(fs::path(b) / "manifest.json"));
  CHECK(slurp(fs::path(a) / "clips.jsonl") == slurp(fs::path(b) / "clips.jsonl"));

  // a one-class vocabulary cannot express contrastive captions
  CHECK(run("gen-data --out " + (dir.path / "c").string() + " --events 1",
            dir.path).exit_code == 2);
}

TEST_CASE("training writes artifacts and echoes the effective config") {
  Fixture& f = fixture();
  CHECK(fs::exists(fs::path(f.out) / "best.ckpt"));
  CHECK(fs::exists(fs::path(f.out) / "last.ckpt"));
  CHECK(fs::exists(fs::path(f.out) / "metrics.csv"));
  CHECK(fs::exists(fs::path(f.out) / "effective.config"));
  CHECK(slurp(fs::path(f.out) / "effective.config").find("model.d = 8") !=
        std::string::npos);
}

TEST_CASE("a frozen model evaluates identically every epoch") {
  Fixture& f = fixture();
  const std::string out = (f.dir.path / "frozen").string();
  RunResult r = run("train --set paths.out=" + out + f.train_args +
                        " --set optimizer.lr=0 --set train.epochs=3",
                    f.dir.path);
  REQUIRE(r.exit_code == 0);

  // every validation row of a metric carries one repeated value
  std::istringstream metrics(slurp(fs::path(out) / "metrics.csv"));
  std::string line, first_r1;
  int val_rows = 0;
  while (std::getline(metrics, line)) {
    if (line.find(",val,r1_mean,") == std::string::npos) continue;
    const std::string value = line.substr(line.rfind(',') + 1);
    if (val_rows == 0) first_r1 = value;
    CHECK(value == first_r1);
    ++val_rows;
  }
  CHECK(val_rows == 3);
}

TEST_CASE("invalid toggle combinations are refused up front") {
  Fixture& f = fixture();
  RunResult r = run("train --set paths.out=" + (f.dir.path / "x").string() +
                        f.train_args + " --set model.use_codebook=false" +
                        " --set model.pooling=mean",
                    f.dir.path);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("model.use_codebook") != std::string::npos);
}

TEST_CASE("evaluation needs a checkpoint that exists") {
  Fixture& f = fixture();
  const std::string cfg_args = " --config " + f.out + "/effective.config";
  RunResult ok = run("eval --checkpoint " + f.out + "/best.ckpt" + cfg_args,
                     f.dir.path);
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("retrieval") != std::string::npos);
  CHECK(ok.out.find("micro event F1") != std::string::npos);

  RunResult gone = run("eval --checkpoint " + f.out + "/no.ckpt" + cfg_args,
                       f.dir.path);
  CHECK(gone.exit_code == 3);
}

TEST_CASE("codebook inspection prints support statistics") {
  Fixture& f = fixture();
  RunResult r = run("inspect-codebook --checkpoint " + f.out + "/best.ckpt" +
                        " --config " + f.out + "/effective.config --top 2",
                    f.dir.path);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("dead:") != std::string::npos);
  CHECK(r.out.find("mean support size") != std::string::npos);
}

TEST_CASE("heatmap export writes the csv and its sidecar") {
  Fixture& f = fixture();
  const std::string csv = (f.dir.path / "heat.csv").string();
  RunResult r = run("export-heatmap --checkpoint " + f.out + "/best.ckpt" +
                        " --config " + f.out + "/effective.config --clip 0 --out " +
                        csv,
                    f.dir.path);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(csv));
  CHECK(fs::exists(csv + ".json"));
  // 3 classes -> 3 rows of 12 comma-separated frames
  std::istringstream rows(slurp(csv));
  std::string line;
  int n_rows = 0;
  while (std::getline(rows, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 11);
    ++n_rows;
  }
  CHECK(n_rows == 3);
}

TEST_CASE("a numeric abort surfaces as exit four with diagnostics") {
  Fixture& f = fixture();
  RunResult r = run("train --set paths.out=" + (f.dir.path / "nan").string() +
                        f.train_args + " --set optimizer.lr=1e160" +
                        " --set optimizer.clip_norm=1e300 --set train.epochs=1",
                    f.dir.path);
  CHECK(r.exit_code == 4);
  CHECK(r.err.find("epoch 0") != std::string::npos);
}

TEST_CASE("resuming continues the epoch counter") {
  Fixture& f = fixture();
  const std::string out = (f.dir.path / "resume").string();
  REQUIRE(run("train --set paths.out=" + out + f.train_args, f.dir.path)
              .exit_code == 0);
  RunResult r = run("train --set paths.out=" + out + f.train_args +
                        " --set train.epochs=3 --set paths.resume=" + out +
                        "/last.ckpt",
                    f.dir.path);
  CHECK(r.exit_code == 0);
  // epochs 0 and 1 already ran; the resumed process starts at 2
  CHECK(r.out.find("epoch 2") != std::string::npos);
  CHECK(r.out.find("epoch 1 ") == std::string::npos);
}

TEST_CASE("the gradient audit is wired through") {
  TempDir dir("grad");
  RunResult r = run("grad-check --points 1 --seed 3", dir.path);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("all gradient checks passed") != std::string::npos);
}

TEST_CASE("the sweep honors --epochs and reports every row") {
  Fixture& f = fixture();
  TempDir dir("sweep");
  const std::string report = (dir.path / "report.json").string();
  RunResult r = run("ablate --seeds 4 --epochs 1 --out " + report +
                        " --set paths.out=" + (dir.path / "runs").string() +
                        f.train_args,
                    dir.path);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("finished 7 runs (0 failed)") != std::string::npos);
  CHECK(r.out.find("softmax variant not above sparsemax") != std::string::npos);

  std::ifstream in(report);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  // the --epochs flag, not train.epochs from --set, decides the schedule
  CHECK(ss.str().find("train.epochs = 1") != std::string::npos);
}
