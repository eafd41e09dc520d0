// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// Drives the pce_cal binary end to end and checks files and exit codes.

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pcecal/dataset_io.hpp"
#include "pcecal/metrics.hpp"
#include "pcecal/serialization.hpp"

namespace fs = std::filesystem;
using namespace pcecal;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("pcecal_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(PCE_CAL_BIN) + " " + args + " > " + (workdir() / "stdout.txt").string() +
                          " 2> " + (workdir() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// Small synthetic dataset shared by the tests.
const fs::path& data_dir() {
  static const fs::path dir = [] {
    const fs::path d = workdir() / "data";
    REQUIRE(run("synthetic --out " + d.string() + " --seed 3 --n-val 800 --n-ho 800 --n-test 600") == 0);
    return d;
  }();
  return dir;
}

const fs::path& model_path() {
  static const fs::path path = [] {
    const fs::path m = workdir() / "model.json";
    REQUIRE(run("fit --data-dir " + data_dir().string() + " --model " + m.string() + " --u 3 --seed 1") == 0);
    return m;
  }();
  return path;
}

}  // namespace

TEST_CASE("synthetic writes loadable files and is byte-identical per seed") {
  const fs::path d = data_dir();
  for (const char* split : {"val", "ho", "test"}) {
    const std::string s(split);
    const Dataset ds = assemble_dataset(d / ("features_" + s + ".npy"), d / ("logits_" + s + ".npy"),
                                        d / ("labels_" + s + ".npy"), parse_split_role(s));
    CHECK(ds.num_classes() == 5);
    CHECK(fs::exists(d / ("groups_" + s + ".npy")));
  }
  const fs::path again = workdir() / "data_again";
  REQUIRE(run("synthetic --out " + again.string() + " --seed 3 --n-val 800 --n-ho 800 --n-test 600") == 0);
  for (const auto& entry : fs::directory_iterator(d)) {
    CHECK(slurp(entry.path()) == slurp(again / entry.path().filename()));
  }
  CHECK(run("synthetic --out " + (workdir() / "empty").string() + " --n-val 0") == 2);
}

TEST_CASE("fit writes a model that reloads") {
  const PartitionEnsemble ens = load_ensemble(model_path());
  CHECK(ens.members.size() == 3);
  CHECK(ens.num_groups == 2);
  CHECK(slurp(workdir() / "stdout.txt").find("member 2 seed 3") != std::string::npos);
}

TEST_CASE("fit input validation") {
  const fs::path nolab = workdir() / "nolab";
  fs::create_directories(nolab);
  for (const char* f : {"features_val.npy", "logits_val.npy", "features_ho.npy", "logits_ho.npy"}) {
    fs::copy_file(data_dir() / f, nolab / f, fs::copy_options::overwrite_existing);
  }
  CHECK(run("fit --data-dir " + nolab.string() + " --model " + (workdir() / "x.json").string()) == 2);
  CHECK(slurp(workdir() / "stderr.txt").find((nolab / "labels_val.npy").string()) != std::string::npos);
  CHECK(run("fit --data-dir " + data_dir().string() + " --model x.json --k 0") == 2);
  CHECK(run("fit --data-dir " + data_dir().string() + " --model x.json --base hb") == 2);
}

TEST_CASE("calibrate") {
  const fs::path out = workdir() / "probs.npy";
  REQUIRE(run("calibrate --data-dir " + data_dir().string() + " --model " + model_path().string() + " --out " +
              out.string()) == 0);
  const Matrix p = load_npy(out);
  CHECK(p.rows() == 600);
  CHECK_NOTHROW(require_normalized(p, 1e-9));
  CHECK(slurp(workdir() / "stdout.txt").find("argmax changes 0") != std::string::npos);

  // Unlabeled test split: succeeds without the accuracy line.
  const fs::path d = data_dir();
  REQUIRE(run("calibrate --test-features " + (d / "features_test.npy").string() + " --test-logits " +
              (d / "logits_test.npy").string() + " --model " + model_path().string() + " --out " + out.string()) ==
          0);
  CHECK(slurp(workdir() / "stdout.txt").find("accuracy") == std::string::npos);

  // Holdout split of the fit itself.
  REQUIRE(run("calibrate --test-features " + (d / "features_ho.npy").string() + " --test-logits " +
              (d / "logits_ho.npy").string() + " --model " + model_path().string() + " --out " + out.string()) ==
          0);
  CHECK(load_npy(out).rows() == 800);

  // Tampered schema tag.
  std::string doc = slurp(model_path());
  doc.replace(doc.find("pce-cal/1"), 9, "pce-cal/7");
  const fs::path bad = workdir() / "bad.json";
  std::ofstream(bad) << doc;
  CHECK(run("calibrate --data-dir " + d.string() + " --model " + bad.string() + " --out " + out.string()) == 2);

  // Dimension mismatch: a model fitted on 3 classes applied to 5-class data.
  const fs::path d3 = workdir() / "three";
  REQUIRE(run("synthetic --out " + d3.string() + " --classes 3 --n-val 300 --n-ho 300 --n-test 10") == 0);
  const fs::path m3 = workdir() / "m3.json";
  REQUIRE(run("fit --data-dir " + d3.string() + " --model " + m3.string() + " --u 1") == 0);
  CHECK(run("calibrate --data-dir " + d.string() + " --model " + m3.string() + " --out " + out.string()) == 2);
}

TEST_CASE("evaluate writes reports") {
  const fs::path r = workdir() / "report";
  REQUIRE(run("evaluate --data-dir " + data_dir().string() + " --model " + model_path().string() + " --out " +
              r.string() + " --bins 12 --trials 5") == 0);
  CHECK(read_csv(r / "reliability.csv").size() == 13);  // header + one row per bin
  const auto comp = read_csv(r / "group_composition.csv");
  REQUIRE(comp.size() > 1);
  for (std::size_t i = 1; i < comp.size(); ++i) {
    double total = 0.0;
    for (std::size_t c = 3; c < comp[i].size(); ++c) total += std::stod(comp[i][c]);
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
  const std::string report = slurp(r / "report.json");
  CHECK(report.find("\"trials\"") != std::string::npos);
  CHECK(report.find("\"pce\"") != std::string::npos);
}

TEST_CASE("evaluate perfect predictions") {
  const fs::path d = data_dir();
  const LabelVector y = load_labels(d / "labels_test.npy");
  Matrix onehot(y.size(), 5, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) onehot(i, y[i]) = 1.0;
  const fs::path probs = workdir() / "perfect.npy";
  save_npy(onehot, probs);
  const fs::path r = workdir() / "perfect";
  REQUIRE(run("evaluate --data-dir " + d.string() + " --probs " + probs.string() + " --out " + r.string() +
              " --metrics ece") == 0);
  CHECK(slurp(workdir() / "stdout.txt").find(" -> 0\n") != std::string::npos);

  Matrix wrong(3, 5, 0.2);
  save_npy(wrong, probs);
  CHECK(run("evaluate --data-dir " + d.string() + " --probs " + probs.string() + " --out " + r.string()) == 2);
}

TEST_CASE("sweep emits one row per grid point") {
  const fs::path out = workdir() / "sweep.csv";
  REQUIRE(run("sweep --data-dir " + data_dir().string() + " --out " + out.string() +
              " --k-grid 1,2 --u-grid 1,2 --lambda 0.1") == 0);
  const auto rows = read_csv(out);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == std::vector<std::string>{"K", "U", "lambda", "ece", "nll", "accuracy"});
}

TEST_CASE("outputs do not depend on the job count") {
  const fs::path a = workdir() / "ja.json";
  const fs::path b = workdir() / "jb.json";
  REQUIRE(run("fit --data-dir " + data_dir().string() + " --model " + a.string() + " --u 4 --jobs 1") == 0);
  REQUIRE(run("fit --data-dir " + data_dir().string() + " --model " + b.string() + " --u 4 --jobs 3") == 0);
  CHECK(slurp(a) == slurp(b));
}
