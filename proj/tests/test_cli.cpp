#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "hywu/report.hpp"

// End-to-end tests against the installed binary (path injected by the build).
namespace {

namespace fs = std::filesystem;

const std::string kCli = HYWU_CLI_PATH;

int run(const std::string& args) {
  const int status = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const char* sub) const { return (path / sub).string(); }
};

void write_train_config(const std::string& path) {
  std::ofstream out(path);
  out << "[task]\nkind = scale\nwidth = 4\ndelta = 0.4\ncond_width = 4\n"
      << "[train]\nmethod = pg\nsteps = 40\nbatch = 4\n"
      << "[generator]\nblocks = 1\nhidden = 8\nheads = 1\n";
}

}  // namespace

TEST_CASE("cli rejects usage errors with exit code 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("eval") == 2);  // --checkpoint is required
  CHECK(run("train --config /nonexistent.ini") == 2);
}

TEST_CASE("cli rejects config mistakes with exit code 2") {
  TempDir dir("hywu_cli_cfg");
  {
    std::ofstream out(dir.str("bad_method.ini"));
    out << "[train]\nmethod = nope\n";
  }
  CHECK(run("train --config " + dir.str("bad_method.ini")) == 2);
  {
    std::ofstream out(dir.str("typo.ini"));
    out << "[train]\nstepz = 10\n";
  }
  CHECK(run("train --config " + dir.str("typo.ini")) == 2);
  {
    std::ofstream out(dir.str("derived.ini"));
    out << "[train]\nmethod = avg-pg\n";
  }
  CHECK(run("train --config " + dir.str("derived.ini")) == 2);
}

TEST_CASE("selfcheck passes and exits 0") {
  CHECK(run("selfcheck --threads 2") == 0);
}

TEST_CASE("train then eval round trip, deterministic outputs") {
  TempDir dir("hywu_cli_train");
  write_train_config(dir.str("cfg.ini"));
  const std::string base = "train --config " + dir.str("cfg.ini") + " --seed 11 --threads 2";
  REQUIRE(run(base + " --out " + dir.str("a")) == 0);
  REQUIRE(run(base + " --out " + dir.str("b")) == 0);

  for (const char* name : {"curves.csv", "curves.svg", "summary.json", "model.ckpt"}) {
    CAPTURE(name);
    CHECK(hywu::read_text_file(dir.str("a") + "/" + name) ==
          hywu::read_text_file(dir.str("b") + "/" + name));
  }
  CHECK(fs::exists(dir.str("a") + "/manifest.json"));

  CHECK(run("eval --config " + dir.str("cfg.ini") + " --seed 11 --checkpoint " +
            dir.str("a") + "/model.ckpt --out " + dir.str("eval")) == 0);
  CHECK(fs::exists(dir.str("eval") + "/eval.csv"));

  // JSON table format writes .json instead.
  CHECK(run("eval --config " + dir.str("cfg.ini") + " --seed 11 --format json --checkpoint " +
            dir.str("a") + "/model.ckpt --out " + dir.str("evalj")) == 0);
  CHECK(fs::exists(dir.str("evalj") + "/eval.json"));

  // Shuffle on a non-generator checkpoint is a config error.
  {
    std::ofstream out(dir.str("single.ini"));
    out << "[task]\nkind = scale\nwidth = 4\ndelta = 0.4\ncond_width = 4\n"
        << "[train]\nmethod = single\nsteps = 40\nbatch = 4\n";
  }
  REQUIRE(run("train --config " + dir.str("single.ini") + " --seed 3 --out " +
              dir.str("s")) == 0);
  CHECK(run("eval --config " + dir.str("single.ini") + " --checkpoint " + dir.str("s") +
            "/model.ckpt --shuffle --out " + dir.str("se")) == 2);
}

TEST_CASE("analyze-gradients writes the report pair") {
  TempDir dir("hywu_cli_grad");
  {
    std::ofstream out(dir.str("cfg.ini"));
    out << "[task]\nkind = scale\nwidth = 4\n"
        << "[gradients]\nsamples_per_task = 20\nshared_x = true\n";
  }
  REQUIRE(run("analyze-gradients --config " + dir.str("cfg.ini") + " --seed 5 --out " +
              dir.str("out")) == 0);
  CHECK(fs::exists(dir.str("out") + "/gradients.json"));
  CHECK(fs::exists(dir.str("out") + "/histograms.csv"));
  CHECK(fs::exists(dir.str("out") + "/manifest.json"));
}
