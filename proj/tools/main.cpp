// Command-line harness: generate, train, sweep, eval, export-embeddings.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gdcn/gdcn.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_of(gdcn_status s) {
  switch (s) {
    case GDCN_OK: return kExitOk;
    case GDCN_ERR_CONFIG:
    case GDCN_ERR_SHAPE:
    case GDCN_ERR_INVALID_ARGUMENT: return kExitConfig;
    case GDCN_ERR_NUMERICAL: return kExitNumerical;
    case GDCN_ERR_IO:
    case GDCN_ERR_FORMAT: return kExitIo;
    case GDCN_ERR_INTERNAL: return 1;
  }
  return 1;
}

void check(gdcn_status s) {
  if (s != GDCN_OK) throw Failure{exit_code_of(s), gdcn_last_error()};
}

[[noreturn]] void config_error(const std::string& what) { throw Failure{kExitConfig, what}; }

struct DatasetHandle {
  gdcn_dataset* p = nullptr;
  DatasetHandle() = default;
  explicit DatasetHandle(gdcn_dataset* d) : p(d) {}
  DatasetHandle(DatasetHandle&& o) noexcept : p(o.p) { o.p = nullptr; }
  DatasetHandle& operator=(DatasetHandle&& o) noexcept {
    std::swap(p, o.p);
    return *this;
  }
  ~DatasetHandle() { gdcn_dataset_free(p); }
};

struct ModelHandle {
  gdcn_model* p = nullptr;
  ModelHandle() = default;
  ModelHandle(ModelHandle&& o) noexcept : p(o.p) { o.p = nullptr; }
  ~ModelHandle() { gdcn_model_free(p); }
};

std::string take_string(char* s) {
  std::string out = s;
  gdcn_string_free(s);
  return out;
}

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App& cmd, Common& c, bool out_required) {
  cmd.add_option("--config", c.config_path, "JSON config file (nested or dotted keys)");
  cmd.add_option("--seed", c.seed, "Master seed");
  auto* out = cmd.add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
  cmd.add_option("--set", c.overrides, "Override a config key, e.g. --set sgdf.K=9 (repeatable)");
}

void merge(json& target, const std::string& path, const json& value) {
  const auto dot = path.find('.');
  if (dot == std::string::npos) {
    if (target.contains(path) && target[path].is_object() && value.is_object()) {
      for (const auto& [k, v] : value.items()) merge(target[path], k, v);
    } else {
      target[path] = value;
    }
    return;
  }
  const std::string head = path.substr(0, dot);
  if (!target.contains(head) || !target[head].is_object()) target[head] = json::object();
  merge(target[head], path.substr(dot + 1), value);
}

json unflatten(const json& in) {
  json out = json::object();
  for (const auto& [k, v] : in.items()) merge(out, k, v.is_object() ? unflatten(v) : v);
  return out;
}

// The experiment config: file, then --set overrides, then --seed.
json load_experiment(const Common& c) {
  json j = json::object();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw Failure{kExitIo, "cannot open config " + c.config_path};
    try {
      in >> j;
    } catch (const json::exception& e) {
      config_error(c.config_path + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) config_error(c.config_path + ": top level must be an object");
  }
  j = unflatten(j);
  for (const std::string& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) config_error("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string text = kv.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::exception&) {
      value = text;
    }
    merge(j, key, value);
  }
  if (c.seed) j["seed"] = *c.seed;
  return j;
}

// Splits experiment-level keys from model keys.
json model_part(const json& experiment) {
  json m = experiment;
  for (const char* key : {"data", "synthetic", "corruption", "out"}) m.erase(key);
  return m;
}

std::vector<std::size_t> parse_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      config_error(std::string(what) + ": '" + item + "' is not a non-negative integer");
    }
  }
  if (out.empty()) config_error(std::string(what) + ": empty list");
  return out;
}

template <class T>
T field(const json& section, const char* section_name, const char* key, T fallback) {
  if (!section.contains(key)) return fallback;
  try {
    return section.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(std::string(section_name) + "." + key + ": wrong type");
  }
}

struct SyntheticFlags {
  std::size_t clusters = 3;
  std::size_t per_cluster = 200;
  std::vector<std::size_t> dims{3, 3, 3};
  double separation = 6.0;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  double noise_fraction = 0.0;
  double missing_fraction = 0.0;
  std::uint64_t corruption_seed = 0;
};

SyntheticFlags synthetic_from(const json& experiment) {
  SyntheticFlags f;
  const std::uint64_t master = field<std::uint64_t>(experiment, "", "seed", 0);
  const json syn = experiment.value("synthetic", json::object());
  const json cor = experiment.value("corruption", json::object());
  f.clusters = field<std::size_t>(syn, "synthetic", "clusters", f.clusters);
  f.per_cluster = field<std::size_t>(syn, "synthetic", "per_cluster", f.per_cluster);
  f.dims = field<std::vector<std::size_t>>(syn, "synthetic", "dims", f.dims);
  f.separation = field<double>(syn, "synthetic", "separation", f.separation);
  f.seed = field<std::uint64_t>(syn, "synthetic", "seed", master);
  f.noise_sigma = field<double>(cor, "corruption", "noise_sigma", 0.0);
  f.noise_fraction = field<double>(cor, "corruption", "noise_fraction", 0.0);
  f.missing_fraction = field<double>(cor, "corruption", "missing_fraction", 0.0);
  f.corruption_seed = field<std::uint64_t>(cor, "corruption", "seed", f.seed);
  return f;
}

// Raw synthetic data with optional corruption (not normalized).
DatasetHandle build_synthetic(const SyntheticFlags& f) {
  gdcn_synthetic_spec spec{f.clusters, f.per_cluster, f.dims.data(), f.dims.size(), f.separation, f.seed};
  DatasetHandle ds;
  check(gdcn_dataset_generate(&spec, &ds.p));
  if (f.noise_fraction > 0.0 || f.missing_fraction > 0.0) {
    gdcn_corruption_spec cs{f.noise_sigma, f.noise_fraction, f.missing_fraction, f.corruption_seed};
    DatasetHandle corrupted;
    check(gdcn_dataset_corrupt(ds.p, &cs, &corrupted.p));
    ds = std::move(corrupted);
  }
  return ds;
}

// Dataset directory from --data or the config's "data" key; otherwise the
// config's synthetic section, normalized the way loading normalizes.
DatasetHandle dataset_for(const json& experiment, const std::string& data_flag) {
  std::string dir = data_flag;
  if (dir.empty() && experiment.contains("data")) {
    if (!experiment["data"].is_string()) config_error("data: expected a directory path");
    dir = experiment["data"].get<std::string>();
  }
  DatasetHandle ds;
  if (!dir.empty()) {
    check(gdcn_dataset_load(dir.c_str(), &ds.p));
    return ds;
  }
  ds = build_synthetic(synthetic_from(experiment));
  check(gdcn_dataset_normalize(ds.p));
  return ds;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Failure{kExitIo, "cannot create directory " + dir};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw Failure{kExitIo, "cannot write " + path.string()};
}

std::string metrics_json(const gdcn_metrics& m) {
  char* s = nullptr;
  check(gdcn_metrics_to_json(&m, &s));
  return take_string(s);
}

void print_epoch(std::size_t epoch, int finetune, double rec, double cl, double total, double acc, void* user) {
  if (!*static_cast<bool*>(user)) return;
  std::fprintf(stderr, "epoch %4zu %-8s rec %.6f cl %.6f total %.6f", epoch, finetune ? "finetune" : "pretrain", rec,
               cl, total);
  if (!std::isnan(acc)) std::fprintf(stderr, " acc %.4f", acc);
  std::fputc('\n', stderr);
}

// Creates the model, writes experiment.json and trains. Returns metrics when
// the dataset has labels.
std::optional<gdcn_metrics> train_once(const json& experiment, const gdcn_dataset* ds, const std::string& out,
                                       bool verbose) {
  ModelHandle model;
  check(gdcn_model_create(ds, model_part(experiment).dump().c_str(), &model.p));
  ensure_dir(out);
  char* effective = nullptr;
  check(gdcn_model_config_json(model.p, &effective));
  json echo = experiment;
  echo["model"] = json::parse(take_string(effective));
  for (const auto& [k, v] : echo["model"].items()) echo.erase(k);
  write_file(fs::path(out) / "experiment.json", echo.dump(2) + "\n");

  gdcn_metrics m{};
  check(gdcn_model_train(model.p, ds, out.c_str(), print_epoch, &verbose, &m));
  int has_labels = 0;
  check(gdcn_dataset_info(ds, nullptr, nullptr, nullptr, &has_labels));
  if (!has_labels) return std::nullopt;
  return m;
}

int cmd_generate(const Common& c, const std::map<std::string, std::string>& flags) {
  json experiment = load_experiment(c);
  for (const auto& [key, value] : flags) {
    if (value.empty()) continue;
    if (key == "dims") experiment["synthetic"]["dims"] = parse_list(value, "--dims");
    else if (key.rfind("corruption.", 0) == 0) merge(experiment, key, json::parse(value));
    else merge(experiment, "synthetic." + key, json::parse(value));
  }
  const SyntheticFlags f = synthetic_from(experiment);
  DatasetHandle ds = build_synthetic(f);
  check(gdcn_dataset_save(ds.p, c.out.c_str()));

  std::size_t n = 0, views = 0, clusters = 0;
  check(gdcn_dataset_info(ds.p, &n, &views, &clusters, nullptr));
  std::string dims;
  for (std::size_t m = 0; m < views; ++m) {
    std::size_t d = 0;
    check(gdcn_dataset_view_dim(ds.p, m, &d));
    dims += (m ? "/" : "") + std::to_string(d);
  }
  std::printf("%-12s %8s %6s %9s  %s\n", "Dataset", "Samples", "Views", "Clusters", "View dimensions");
  std::printf("%-12s %8zu %6zu %9zu  %s\n", "synthetic", n, views, clusters, dims.c_str());
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& data, const std::string& ablation, bool quiet) {
  json experiment = load_experiment(c);
  if (!ablation.empty()) experiment["ablation"] = ablation;
  DatasetHandle ds = dataset_for(experiment, data);
  if (!data.empty()) experiment["data"] = data;
  const auto m = train_once(experiment, ds.p, c.out, !quiet);
  if (m) std::printf("%s\n", metrics_json(*m).c_str());
  return kExitOk;
}

int cmd_sweep(const Common& c, const std::string& data, const std::string& param, const std::string& values,
              bool quiet) {
  if (param != "B" && param != "K") config_error("--param: expected B or K, got '" + param + "'");
  json experiment = load_experiment(c);
  const std::vector<std::size_t> list = parse_list(values, "--values");
  DatasetHandle ds = dataset_for(experiment, data);
  if (!data.empty()) experiment["data"] = data;

  // Validate every value up front so a bad value fails before any training.
  std::vector<json> runs;
  for (std::size_t v : list) {
    json run = experiment;
    merge(run, "sgdf." + param, v);
    ModelHandle probe;
    const gdcn_status s = gdcn_model_create(ds.p, model_part(run).dump().c_str(), &probe.p);
    if (s != GDCN_OK) throw Failure{exit_code_of(s), "sweep value " + std::to_string(v) + ": " + gdcn_last_error()};
    runs.push_back(std::move(run));
  }

  ensure_dir(c.out);
  std::string csv = "value,acc,nmi,pur\n";
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string dir = (fs::path(c.out) / (param + "_" + std::to_string(list[i]))).string();
    if (!quiet) std::fprintf(stderr, "sweep %s=%zu\n", param.c_str(), list[i]);
    const auto m = train_once(runs[i], ds.p, dir, false);
    char row[160];
    if (m) std::snprintf(row, sizeof row, "%zu,%.6f,%.6f,%.6f\n", list[i], m->acc, m->nmi, m->pur);
    else std::snprintf(row, sizeof row, "%zu,,,\n", list[i]);
    csv += row;
    write_file(fs::path(c.out) / ("sweep_" + param + ".csv"), csv);
  }
  std::printf("%s", csv.c_str());
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& data) {
  const json experiment = load_experiment(c);
  DatasetHandle ds = dataset_for(experiment, data);
  ModelHandle model;
  check(gdcn_model_load(checkpoint.c_str(), &model.p));
  gdcn_metrics m{};
  check(gdcn_model_evaluate(model.p, ds.p, &m));
  const std::string text = metrics_json(m);
  if (!c.out.empty()) {
    ensure_dir(c.out);
    write_file(fs::path(c.out) / "metrics.json", text + "\n");
  }
  std::printf("%s\n", text.c_str());
  return kExitOk;
}

int cmd_export(const Common& c, const std::string& checkpoint, const std::string& data, const std::string& which) {
  const json experiment = load_experiment(c);
  DatasetHandle ds = dataset_for(experiment, data);
  ModelHandle model;
  check(gdcn_model_load(checkpoint.c_str(), &model.p));
  check(gdcn_model_export_embeddings(model.p, ds.p, which.c_str(), c.out.c_str()));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view clustering with diffusion fusion and contrastive alignment"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gdcn_version());

  Common gen_common, train_common, sweep_common, eval_common, export_common;

  auto* gen = app.add_subcommand("generate", "Write a synthetic multi-view dataset");
  add_common(*gen, gen_common, true);
  std::map<std::string, std::string> gen_flags;
  gen->add_option("--clusters", gen_flags["clusters"], "Number of clusters (default 3)");
  gen->add_option("--per-cluster", gen_flags["per_cluster"], "Samples per cluster (default 200)");
  gen->add_option("--dims", gen_flags["dims"], "Comma-separated view widths (default 3,3,3)");
  gen->add_option("--separation", gen_flags["separation"], "Cluster center scale (default 6)");
  gen->add_option("--noise-sigma", gen_flags["corruption.noise_sigma"], "Std-dev of additive cell noise");
  gen->add_option("--noise-fraction", gen_flags["corruption.noise_fraction"], "Fraction of cells given noise");
  gen->add_option("--missing-fraction", gen_flags["corruption.missing_fraction"], "Fraction of cells zeroed");

  auto* train = app.add_subcommand("train", "Pretrain, finetune and evaluate");
  add_common(*train, train_common, true);
  std::string train_data, ablation;
  bool train_quiet = false;
  train->add_option("--data", train_data, "Dataset directory (default: synthetic data from the config)");
  train->add_option("--ablation", ablation, "none, no-sgdf or no-cl");
  train->add_flag("--quiet", train_quiet, "No per-epoch progress");

  auto* sweep = app.add_subcommand("sweep", "One full run per value of B or K");
  add_common(*sweep, sweep_common, true);
  std::string sweep_data, param, values;
  bool sweep_quiet = false;
  sweep->add_option("--data", sweep_data, "Dataset directory");
  sweep->add_option("--param", param, "B or K")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_flag("--quiet", sweep_quiet, "No progress output");

  auto* eval = app.add_subcommand("eval", "Metrics of a checkpoint on a dataset");
  add_common(*eval, eval_common, false);
  std::string eval_ckpt, eval_data;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Dataset directory");

  auto* exp = app.add_subcommand("export-embeddings", "Write embeddings as CSV");
  add_common(*exp, export_common, true);
  std::string exp_ckpt, exp_data, which = "fused";
  exp->add_option("--checkpoint", exp_ckpt, "Checkpoint file")->required();
  exp->add_option("--data", exp_data, "Dataset directory");
  exp->add_option("--which", which, "fused, projected or per-view");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_generate(gen_common, gen_flags);
    if (*train) return cmd_train(train_common, train_data, ablation, train_quiet);
    if (*sweep) return cmd_sweep(sweep_common, sweep_data, param, values, sweep_quiet);
    if (*eval) return cmd_eval(eval_common, eval_ckpt, eval_data);
    if (*exp) return cmd_export(export_common, exp_ckpt, exp_data, which);
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.exit_code;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitOk;
}
