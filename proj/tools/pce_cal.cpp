// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// pce_cal: fit, apply and evaluate group calibration from the command line.
//
// Exit codes: 0 success, 2 input or validation error, 3 numeric or
// optimization failure.

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pcecal/calibrators.hpp"
#include "pcecal/dataset_io.hpp"
#include "pcecal/ensemble.hpp"
#include "pcecal/error.hpp"
#include "pcecal/metrics.hpp"
#include "pcecal/serialization.hpp"
#include "pcecal/synthetic.hpp"
#include "pcecal/trials.hpp"

namespace fs = std::filesystem;
using namespace pcecal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct SplitPaths {
  std::string features;
  std::string logits;
  std::string labels;
};

struct Options {
  std::string data_dir;
  SplitPaths val, ho, test;
  std::string model;
  std::string out;
  std::string probs;

  std::size_t k = 2;
  std::size_t u = 20;
  double lambda = 0.1;
  std::string base = "ts";
  std::size_t bins = 15;
  std::string bin_mode = "width";
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  double trial_fraction = 0.5;
  std::size_t jobs = 1;
  std::size_t max_iter = 200;
  std::size_t min_group_size = 10;
  std::vector<std::string> metrics{"ece", "classwise_ece", "nll", "brier", "accuracy", "pce"};

  std::vector<std::size_t> k_grid;
  std::vector<std::size_t> u_grid;
  std::vector<double> lambda_grid;

  SyntheticSpec synth;
};

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

BinningScheme scheme_from(const Options& o) {
  return {o.bins, o.bin_mode == "mass" ? BinMode::kEqualMass : BinMode::kEqualWidth};
}

std::string default_path(const Options& o, const std::string& kind, SplitRole role) {
  if (o.data_dir.empty()) return {};
  const fs::path p = fs::path(o.data_dir) / (kind + "_" + std::string(to_string(role)) + ".npy");
  return p.string();
}

// Explicit per-split flags win over --data-dir. Labels are optional only where
// the role allows it; with --data-dir a missing test labels file is skipped.
Dataset load_split(const Options& o, const SplitPaths& paths, SplitRole role) {
  const std::string features = paths.features.empty() ? default_path(o, "features", role) : paths.features;
  const std::string logits = paths.logits.empty() ? default_path(o, "logits", role) : paths.logits;
  std::string labels = paths.labels.empty() ? default_path(o, "labels", role) : paths.labels;
  const std::string name(to_string(role));
  if (features.empty() || logits.empty()) {
    throw Error(ErrorKind::kInvalidInput,
                "split '" + name + "' needs --" + name + "-features and --" + name + "-logits (or --data-dir)");
  }
  if (role == SplitRole::kTest && paths.labels.empty() && !labels.empty() && !fs::exists(labels)) {
    labels.clear();
  }
  std::optional<fs::path> label_path;
  if (!labels.empty()) label_path = labels;
  spdlog::debug("loading {} split: {}, {}{}", name, features, logits, labels.empty() ? "" : ", " + labels);
  return assemble_dataset(features, logits, label_path, role);
}

void check_ranges(const Options& o) {
  if (o.k == 0) throw Error(ErrorKind::kRange, "--k must be at least 1");
  if (o.u == 0) throw Error(ErrorKind::kRange, "--u must be at least 1");
  if (!(o.lambda >= 0.0) || !std::isfinite(o.lambda)) throw Error(ErrorKind::kRange, "--lambda must be finite and >= 0");
  if (o.bins == 0) throw Error(ErrorKind::kRange, "--bins must be at least 1");
  if (o.jobs == 0) throw Error(ErrorKind::kRange, "--jobs must be at least 1");
  if (!(o.trial_fraction > 0.0 && o.trial_fraction <= 1.0)) {
    throw Error(ErrorKind::kRange, "--trial-fraction must lie in (0, 1]");
  }
}

EnsembleConfig ensemble_config(const Options& o, std::size_t k, std::size_t u, double lambda) {
  EnsembleConfig cfg;
  cfg.train.num_groups = k;
  cfg.train.lambda = lambda;
  cfg.train.seed = o.seed;
  cfg.train.optimizer.max_iterations = o.max_iter;
  cfg.num_partitions = u;
  cfg.base = parse_calibrator_tag(o.base);
  cfg.min_group_size = o.min_group_size;
  cfg.jobs = o.jobs;
  return cfg;
}

std::string tau_list(const EnsembleMember& m) {
  std::string s;
  for (const Calibrator& c : m.group_calibrators) {
    double tau = 1.0;
    if (const auto* ts = std::get_if<TemperatureScaling>(&c.params())) tau = ts->tau();
    if (const auto* ets = std::get_if<EnsembleTemperatureScaling>(&c.params())) tau = ets->tau();
    if (!s.empty()) s += ",";
    s += fmt_double(tau);
  }
  return s;
}

int cmd_synthetic(const Options& o) {
  if (o.out.empty()) throw Error(ErrorKind::kInvalidInput, "synthetic needs --out");
  SyntheticSpec spec = o.synth;
  spec.seed = o.seed;
  const SyntheticData d = generate_synthetic(spec);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  auto emit = [&](const Dataset& ds, const Partition& latent) {
    const std::string tag(to_string(ds.role));
    save_npy(ds.features, dir / ("features_" + tag + ".npy"));
    save_npy(ds.logits, dir / ("logits_" + tag + ".npy"));
    save_npy(*ds.labels, dir / ("labels_" + tag + ".npy"));
    std::vector<Label> groups(latent.group_ids.begin(), latent.group_ids.end());
    save_npy(LabelVector(std::move(groups)), dir / ("groups_" + tag + ".npy"));
  };
  emit(d.validation, d.latent_validation);
  emit(d.holdout, d.latent_holdout);
  emit(d.test, d.latent_test);
  std::cout << "wrote synthetic splits to " << dir.string() << " (val " << d.validation.size() << ", ho "
            << d.holdout.size() << ", test " << d.test.size() << ")\n";
  return kExitOk;
}

int cmd_fit(const Options& o) {
  check_ranges(o);
  if (o.model.empty()) throw Error(ErrorKind::kInvalidInput, "fit needs --model");
  const Dataset val = load_split(o, o.val, SplitRole::kValidation);
  const Dataset ho = load_split(o, o.ho, SplitRole::kHoldout);
  if (val.feature_dim() != ho.feature_dim() || val.num_classes() != ho.num_classes()) {
    throw Error(ErrorKind::kDimension, "validation and holdout splits disagree on feature or class count");
  }
  const EnsembleConfig cfg = ensemble_config(o, o.k, o.u, o.lambda);
  spdlog::info("fitting {} partitions with K={} lambda={} base={}", o.u, o.k, o.lambda, o.base);
  const PartitionEnsemble ens = fit_ensemble(val, ho, cfg);
  save_ensemble(ens, o.model);
  for (std::size_t u = 0; u < ens.members.size(); ++u) {
    const auto& m = ens.members[u];
    std::cout << "member " << u << " seed " << (o.seed + u) << " loss " << fmt_double(m.train_loss)
              << (m.converged ? "" : " (not converged)") << " tau " << tau_list(m) << "\n";
    if (!m.converged) spdlog::warn("member {} stopped before convergence", u);
  }
  std::cout << "wrote model " << o.model << "\n";
  return kExitOk;
}

void require_model_fits(const PartitionEnsemble& ens, const Dataset& d, const std::string& model) {
  if (ens.feature_dim != d.feature_dim() || ens.num_classes != d.num_classes()) {
    throw Error(ErrorKind::kDimension, "model " + model + " expects d_z=" + std::to_string(ens.feature_dim) +
                                           ", M=" + std::to_string(ens.num_classes) + " but data has d_z=" +
                                           std::to_string(d.feature_dim()) + ", M=" +
                                           std::to_string(d.num_classes()));
  }
}

int cmd_calibrate(const Options& o) {
  if (o.jobs == 0) throw Error(ErrorKind::kRange, "--jobs must be at least 1");
  if (o.model.empty() || o.out.empty()) throw Error(ErrorKind::kInvalidInput, "calibrate needs --model and --out");
  const PartitionEnsemble ens = load_ensemble(o.model);
  const Dataset test = load_split(o, o.test, SplitRole::kTest);
  require_model_fits(ens, test, o.model);
  const Matrix probs = calibrate(ens, test, o.jobs);
  save_npy(probs, o.out);
  std::cout << "wrote " << probs.rows() << "x" << probs.cols() << " probabilities to " << o.out << "\n";
  if (test.labels) {
    const auto a = argmax_rows(test.logits);
    const auto b = argmax_rows(probs);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < a.size(); ++i) changed += a[i] != b[i];
    std::cout << "accuracy " << fmt_double(accuracy(softmax_rows(test.logits), *test.labels)) << " -> "
              << fmt_double(accuracy(probs, *test.labels)) << ", argmax changes " << changed << "\n";
  }
  return kExitOk;
}

std::string reliability_csv(const Matrix& probs, const LabelVector& labels, std::size_t bins) {
  std::ostringstream s;
  s << "bin_center,mean_confidence,accuracy,count\n";
  for (const auto& b : reliability_bins(probs, labels, bins)) {
    s << fmt_double(b.center) << "," << fmt_double(b.mean_confidence) << "," << fmt_double(b.accuracy) << ","
      << b.count << "\n";
  }
  return s.str();
}

std::string composition_csv(const PartitionEnsemble& ens, const Dataset& d) {
  const LabelVector& y = *d.labels;
  const std::size_t m = d.num_classes();
  std::ostringstream s;
  s << "member,group,size";
  for (std::size_t c = 0; c < m; ++c) s << ",class_" << c;
  s << "\n";
  const auto parts = member_partitions(ens, d.features);
  for (std::size_t u = 0; u < parts.size(); ++u) {
    std::vector<std::vector<double>> counts(parts[u].num_groups, std::vector<double>(m, 0.0));
    std::vector<std::size_t> sizes(parts[u].num_groups, 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      counts[parts[u].group_ids[i]][y[i]] += 1.0;
      ++sizes[parts[u].group_ids[i]];
    }
    for (std::size_t g = 0; g < sizes.size(); ++g) {
      if (sizes[g] == 0) continue;
      s << u << "," << g << "," << sizes[g];
      for (std::size_t c = 0; c < m; ++c) s << "," << fmt_double(counts[g][c] / static_cast<double>(sizes[g]));
      s << "\n";
    }
  }
  return s.str();
}

int cmd_evaluate(const Options& o) {
  check_ranges(o);
  if (o.out.empty()) throw Error(ErrorKind::kInvalidInput, "evaluate needs --out");
  if (o.model.empty() == o.probs.empty()) {
    throw Error(ErrorKind::kInvalidInput, "evaluate needs exactly one of --model or --probs");
  }
  const Dataset test = load_split(o, o.test, SplitRole::kTest);
  const LabelVector& labels = test.require_labels();

  EvaluationOptions opts;
  opts.scheme = scheme_from(o);
  for (const auto& name : o.metrics) opts.metrics.push_back(parse_metric_kind(name));

  std::optional<PartitionEnsemble> ens;
  Matrix probs;
  std::vector<Partition> partitions;
  if (!o.model.empty()) {
    ens = load_ensemble(o.model);
    require_model_fits(*ens, test, o.model);
    probs = calibrate(*ens, test, o.jobs);
    partitions = member_partitions(*ens, test.features);
  } else {
    probs = load_matrix(o.probs);
  }
  const Evaluation ev = evaluate(probs, test, opts, partitions);
  auto report = nlohmann::ordered_json::parse(evaluation_to_json(ev));

  if (o.trials > 0) {
    if (!ens) throw Error(ErrorKind::kInvalidInput, "--trials needs --model (the baseline is its global fallback)");
    const Matrix baseline = ens->fallback.apply(test.logits);
    const BinningScheme scheme = opts.scheme;
    const ScalarMetric metric = [scheme](const Matrix& p, const LabelVector& l) {
      return ece(p, l, scheme, EceVariant::kTopLabel).value;
    };
    const TrialSummary s = repeated_trials(probs, baseline, labels, metric, o.trials, o.trial_fraction, o.seed);
    nlohmann::ordered_json t;
    t["metric"] = "ece";
    t["trials"] = o.trials;
    t["fraction"] = o.trial_fraction;
    t["group_calibrated"] = {{"mean", s.mean_a}, {"std", s.std_a}};
    t["global_baseline"] = {{"mean", s.mean_b}, {"std", s.std_b}};
    t["mean_difference"] = s.test.mean_difference;
    t["t_statistic"] = s.test.t_statistic ? nlohmann::ordered_json(*s.test.t_statistic) : nullptr;
    t["p_value"] = s.test.p_value ? nlohmann::ordered_json(*s.test.p_value) : nullptr;
    report["trials"] = std::move(t);
    std::cout << "trials " << o.trials << ": ece " << fmt_double(s.mean_a) << " vs baseline "
              << fmt_double(s.mean_b);
    if (s.test.p_value) std::cout << ", p " << fmt_double(*s.test.p_value);
    std::cout << "\n";
  }

  const fs::path dir(o.out);
  write_text(dir / "report.json", report.dump(2) + "\n");
  write_text(dir / "reliability.csv", reliability_csv(probs, labels, o.bins));
  write_text(dir / "reliability_uncalibrated.csv", reliability_csv(softmax_rows(test.logits), labels, o.bins));
  if (ens) write_text(dir / "group_composition.csv", composition_csv(*ens, test));

  for (std::size_t i = 0; i < ev.after.size(); ++i) {
    std::cout << ev.after[i].metric << " " << fmt_double(ev.before[i].value) << " -> "
              << fmt_double(ev.after[i].value) << "\n";
  }
  std::cout << "wrote reports to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_sweep(const Options& o) {
  check_ranges(o);
  if (o.out.empty()) throw Error(ErrorKind::kInvalidInput, "sweep needs --out");
  const auto k_grid = o.k_grid.empty() ? std::vector<std::size_t>{o.k} : o.k_grid;
  const auto u_grid = o.u_grid.empty() ? std::vector<std::size_t>{o.u} : o.u_grid;
  const auto l_grid = o.lambda_grid.empty() ? std::vector<double>{o.lambda} : o.lambda_grid;
  for (auto k : k_grid) {
    if (k == 0) throw Error(ErrorKind::kRange, "--k-grid entries must be at least 1");
  }
  for (auto u : u_grid) {
    if (u == 0) throw Error(ErrorKind::kRange, "--u-grid entries must be at least 1");
  }
  for (double l : l_grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorKind::kRange, "--lambda-grid entries must be >= 0");
  }

  const Dataset val = load_split(o, o.val, SplitRole::kValidation);
  const Dataset ho = load_split(o, o.ho, SplitRole::kHoldout);
  const Dataset test = load_split(o, o.test, SplitRole::kTest);
  const LabelVector& labels = test.require_labels();
  const BinningScheme scheme = scheme_from(o);

  std::ostringstream csv;
  csv << "K,U,lambda,ece,nll,accuracy\n";
  for (auto k : k_grid) {
    for (auto u : u_grid) {
      for (double l : l_grid) {
        spdlog::info("sweep point K={} U={} lambda={}", k, u, l);
        const PartitionEnsemble ens = fit_ensemble(val, ho, ensemble_config(o, k, u, l));
        const Matrix probs = calibrate(ens, test, o.jobs);
        const double e = ece(probs, labels, scheme, EceVariant::kTopLabel).value;
        csv << k << "," << u << "," << fmt_double(l) << "," << fmt_double(e) << ","
            << fmt_double(nll_from_probs(probs, labels)) << "," << fmt_double(accuracy(probs, labels)) << "\n";
      }
    }
  }
  write_text(o.out, csv.str());
  std::cout << csv.str();
  return kExitOk;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("pce_cal");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("PCE_CAL_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only accept it when asked for.
    if (level != spdlog::level::off || std::string(env) == "off") {
      spdlog::set_level(level);
    } else {
      spdlog::warn("ignoring unknown PCE_CAL_LOG level '{}'", env);
    }
  }
}

void add_split_flags(CLI::App* cmd, SplitPaths& p, const std::string& name, bool labels) {
  cmd->add_option("--" + name + "-features", p.features, name + " features (.npy or .csv)");
  cmd->add_option("--" + name + "-logits", p.logits, name + " logits (.npy or .csv)");
  if (labels) cmd->add_option("--" + name + "-labels", p.labels, name + " labels (.npy or .csv)");
}

void add_fit_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--k", o.k, "groups per partition")->capture_default_str();
  cmd->add_option("--u", o.u, "number of partitions")->capture_default_str();
  cmd->add_option("--lambda", o.lambda, "L2 penalty on the grouping weights")->capture_default_str();
  cmd->add_option("--base", o.base, "per-group calibrator")->check(CLI::IsMember({"ts", "ets"}))->capture_default_str();
  cmd->add_option("--max-iter", o.max_iter, "L-BFGS iteration cap")->capture_default_str();
  cmd->add_option("--min-group-size", o.min_group_size, "smaller holdout groups use the global calibrator")
      ->capture_default_str();
}

void add_bin_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--bins", o.bins, "number of bins")->capture_default_str();
  cmd->add_option("--bin-mode", o.bin_mode, "bin layout")->check(CLI::IsMember({"width", "mass"}))->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  Options o;
  CLI::App app{"Group calibration and partitioned calibration error toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", o.seed, "base random seed; partition u uses seed + u")->capture_default_str();
  app.add_option("--jobs", o.jobs, "worker threads (results do not depend on it)")->capture_default_str();

  auto* synth = app.add_subcommand("synthetic", "generate a synthetic dataset with latent groups");
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--n-val", o.synth.n_validation)->capture_default_str();
  synth->add_option("--n-ho", o.synth.n_holdout)->capture_default_str();
  synth->add_option("--n-test", o.synth.n_test)->capture_default_str();
  synth->add_option("--classes", o.synth.num_classes)->capture_default_str();
  synth->add_option("--feature-dim", o.synth.feature_dim)->capture_default_str();
  synth->add_option("--distortions", o.synth.distortions, "logit scale per latent group")->delimiter(',');
  synth->add_option("--separation", o.synth.cluster_separation)->capture_default_str();
  synth->add_option("--logit-scale", o.synth.logit_scale)->capture_default_str();

  auto* fit = app.add_subcommand("fit", "train a partition ensemble on validation + holdout splits");
  fit->add_option("--data-dir", o.data_dir, "directory with features_<split>.npy etc.");
  add_split_flags(fit, o.val, "val", true);
  add_split_flags(fit, o.ho, "ho", true);
  fit->add_option("--model", o.model, "output model JSON")->required();
  add_fit_flags(fit, o);

  auto* cal = app.add_subcommand("calibrate", "apply a model to a test split");
  cal->add_option("--data-dir", o.data_dir);
  add_split_flags(cal, o.test, "test", true);
  cal->add_option("--model", o.model)->required();
  cal->add_option("--out", o.out, "output .npy of probabilities")->required();

  auto* eval = app.add_subcommand("evaluate", "score calibrated probabilities on a labeled split");
  eval->add_option("--data-dir", o.data_dir);
  add_split_flags(eval, o.test, "test", true);
  eval->add_option("--model", o.model, "model JSON (calibrates the split)");
  eval->add_option("--probs", o.probs, "precomputed probabilities (.npy or .csv)");
  eval->add_option("--out", o.out, "output directory")->required();
  eval->add_option("--metrics", o.metrics, "ece, ece_full, classwise_ece, nll, brier, accuracy, pce")
      ->delimiter(',')
      ->capture_default_str();
  eval->add_option("--trials", o.trials, "paired resampling trials against the model's global calibrator")
      ->capture_default_str();
  eval->add_option("--trial-fraction", o.trial_fraction, "fraction of rows per trial")->capture_default_str();
  add_bin_flags(eval, o);

  auto* sweep = app.add_subcommand("sweep", "fit and evaluate over a grid of K, U and lambda");
  sweep->add_option("--data-dir", o.data_dir);
  add_split_flags(sweep, o.val, "val", true);
  add_split_flags(sweep, o.ho, "ho", true);
  add_split_flags(sweep, o.test, "test", true);
  sweep->add_option("--out", o.out, "output CSV")->required();
  sweep->add_option("--k-grid", o.k_grid)->delimiter(',');
  sweep->add_option("--u-grid", o.u_grid)->delimiter(',');
  sweep->add_option("--lambda-grid", o.lambda_grid)->delimiter(',');
  add_fit_flags(sweep, o);
  add_bin_flags(sweep, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*synth) return cmd_synthetic(o);
    if (*fit) return cmd_fit(o);
    if (*cal) return cmd_calibrate(o);
    if (*eval) return cmd_evaluate(o);
    if (*sweep) return cmd_sweep(o);
  } catch (const Error& e) {
    const bool numeric = e.kind() == ErrorKind::kNumeric;
    spdlog::error("{}: {}", to_string(e.kind()), e.what());
    return numeric ? kExitNumeric : kExitInput;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("io: {}", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitNumeric;
  }
  return kExitInput;
}
