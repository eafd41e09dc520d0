// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/serialization.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pcecal/error.hpp"

namespace pcecal {
namespace {

using nlohmann::json;

[[noreturn]] void bad_model(const std::string& what) {
  throw Error(ErrorKind::kParse, "model file: " + what);
}

CalibratorTag parse_tag(const json& j) {
  try {
    return parse_calibrator_tag(j.get<std::string>());
  } catch (const Error& e) {
    bad_model(e.what());
  }
}

json calibrator_json(const Calibrator& c) {
  json j;
  j["tag"] = std::string(to_string(c.tag()));
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TemperatureScaling>) {
          j["log_tau"] = p.log_tau;
          j["tau"] = p.tau();
        } else if constexpr (std::is_same_v<T, EnsembleTemperatureScaling>) {
          j["log_tau"] = p.log_tau;
          j["tau"] = p.tau();
          j["weights"] = p.weights;
        } else {
          j["num_bins"] = p.scheme.num_bins;
          j["mode"] = p.scheme.mode == BinMode::kEqualWidth ? "width" : "mass";
          j["bin_values"] = p.bin_values;
          j["bin_edges"] = p.bin_edges;
        }
      },
      c.params());
  return j;
}

Calibrator calibrator_parse(const json& j) {
  const CalibratorTag tag = parse_tag(j.at("tag"));
  switch (tag) {
    case CalibratorTag::kTS:
      return TemperatureScaling{j.at("log_tau").get<double>()};
    case CalibratorTag::kETS: {
      EnsembleTemperatureScaling e;
      e.log_tau = j.at("log_tau").get<double>();
      e.weights = j.at("weights").get<std::array<double, 3>>();
      return e;
    }
    case CalibratorTag::kHB: {
      HistogramBinning h;
      h.scheme.num_bins = j.at("num_bins").get<std::size_t>();
      h.scheme.mode = j.at("mode").get<std::string>() == "mass" ? BinMode::kEqualMass
                                                                : BinMode::kEqualWidth;
      h.bin_values = j.at("bin_values").get<std::vector<double>>();
      h.bin_edges = j.at("bin_edges").get<std::vector<double>>();
      if (h.bin_values.size() != h.scheme.num_bins) bad_model("histogram bin count mismatch");
      return h;
    }
  }
  bad_model("unknown calibrator tag");
}

json grouping_json(const GroupingModel& g) {
  const auto w = g.weights.data();
  return json{{"num_groups", g.num_groups()},
              {"feature_dim", g.feature_dim()},
              {"weights", std::vector<double>(w.begin(), w.end())},
              {"bias", g.bias},
              {"feature_mean", g.feature_mean},
              {"feature_scale", g.feature_scale}};
}

GroupingModel grouping_parse(const json& j) {
  const auto k = j.at("num_groups").get<std::size_t>();
  const auto dz = j.at("feature_dim").get<std::size_t>();
  auto weights = j.at("weights").get<std::vector<double>>();
  GroupingModel g;
  g.bias = j.at("bias").get<std::vector<double>>();
  g.feature_mean = j.at("feature_mean").get<std::vector<double>>();
  g.feature_scale = j.at("feature_scale").get<std::vector<double>>();
  if (k == 0 || weights.size() != dz * k || g.bias.size() != k || g.feature_mean.size() != dz ||
      g.feature_scale.size() != dz) {
    bad_model("grouping arrays do not match num_groups x feature_dim");
  }
  for (double s : g.feature_scale) {
    if (!(s > 0.0)) bad_model("feature_scale must be strictly positive");
  }
  g.weights = Matrix(dz, k, std::move(weights));
  return g;
}

json report_json(const MetricReport& r) {
  json groups = json::array();
  for (const auto& g : r.groups) {
    groups.push_back({{"partition", g.partition},
                      {"group", g.group},
                      {"size", g.size},
                      {"prediction_stat", g.prediction_stat},
                      {"label_stat", g.label_stat},
                      {"gap", g.gap}});
  }
  return json{{"metric", r.metric}, {"value", r.value}, {"groups", std::move(groups)}};
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

}  // namespace

std::string ensemble_to_json(const PartitionEnsemble& e) {
  json members = json::array();
  for (const auto& m : e.members) {
    json calibs = json::array();
    for (const auto& c : m.group_calibrators) calibs.push_back(calibrator_json(c));
    members.push_back({{"grouping", grouping_json(m.grouping)},
                       {"validation_log_taus", m.validation_taus.log_taus},
                       {"train_loss", m.train_loss},
                       {"converged", m.converged},
                       {"holdout_group_sizes", m.holdout_group_sizes},
                       {"uses_fallback", m.uses_fallback},
                       {"calibrators", std::move(calibs)}});
  }
  const json doc{{"schema", std::string(kModelSchema)},
                 {"base", std::string(to_string(e.base))},
                 {"num_groups", e.num_groups},
                 {"num_partitions", e.members.size()},
                 {"lambda", e.lambda},
                 {"seed", e.seed},
                 {"num_classes", e.num_classes},
                 {"feature_dim", e.feature_dim},
                 {"min_group_size", e.min_group_size},
                 {"fallback", calibrator_json(e.fallback)},
                 {"members", std::move(members)}};
  return doc.dump(2);
}

PartitionEnsemble ensemble_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    if (!doc.is_object() || doc.value("schema", std::string()) != kModelSchema) {
      bad_model("missing or unsupported schema tag (expected \"" + std::string(kModelSchema) +
                "\")");
    }
    PartitionEnsemble e;
    e.base = parse_tag(doc.at("base"));
    e.num_groups = doc.at("num_groups").get<std::size_t>();
    e.lambda = doc.at("lambda").get<double>();
    e.seed = doc.at("seed").get<std::uint64_t>();
    e.num_classes = doc.at("num_classes").get<std::size_t>();
    e.feature_dim = doc.at("feature_dim").get<std::size_t>();
    e.min_group_size = doc.at("min_group_size").get<std::size_t>();
    e.fallback = calibrator_parse(doc.at("fallback"));
    for (const auto& mj : doc.at("members")) {
      EnsembleMember m;
      m.grouping = grouping_parse(mj.at("grouping"));
      m.validation_taus.log_taus = mj.at("validation_log_taus").get<std::vector<double>>();
      m.train_loss = mj.at("train_loss").get<double>();
      m.converged = mj.at("converged").get<bool>();
      m.holdout_group_sizes = mj.at("holdout_group_sizes").get<std::vector<std::size_t>>();
      m.uses_fallback = mj.at("uses_fallback").get<std::vector<bool>>();
      for (const auto& cj : mj.at("calibrators")) m.group_calibrators.push_back(calibrator_parse(cj));
      if (m.grouping.num_groups() != e.num_groups || m.group_calibrators.size() != e.num_groups) {
        bad_model("member does not have exactly num_groups calibrators");
      }
      if (m.grouping.feature_dim() != e.feature_dim) bad_model("member feature_dim mismatch");
      e.members.push_back(std::move(m));
    }
    if (e.members.empty()) bad_model("no members");
    if (doc.at("num_partitions").get<std::size_t>() != e.members.size()) {
      bad_model("num_partitions does not match member count");
    }
    return e;
  } catch (const json::exception& ex) {
    bad_model(ex.what());
  }
}

void save_ensemble(const PartitionEnsemble& ensemble, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << ensemble_to_json(ensemble) << '\n';
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

PartitionEnsemble load_ensemble(const std::filesystem::path& path) {
  try {
    return ensemble_from_json(read_text(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string calibrator_to_json(const Calibrator& calibrator) {
  return calibrator_json(calibrator).dump();
}

Calibrator calibrator_from_json(std::string_view text) {
  try {
    return calibrator_parse(json::parse(text));
  } catch (const json::exception& ex) {
    bad_model(ex.what());
  }
}

std::string report_to_json(const MetricReport& report) { return report_json(report).dump(2); }

std::string reports_to_json(const std::vector<MetricReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(report_json(r));
  return arr.dump(2);
}

std::string evaluation_to_json(const Evaluation& ev) {
  json before = json::array();
  json after = json::array();
  for (const auto& r : ev.before) before.push_back(report_json(r));
  for (const auto& r : ev.after) after.push_back(report_json(r));
  return json{{"accuracy_before", ev.accuracy_before},
              {"accuracy_after", ev.accuracy_after},
              {"argmax_changes", ev.argmax_changes},
              {"before", std::move(before)},
              {"after", std::move(after)}}
      .dump(2);
}

}  // namespace pcecal
