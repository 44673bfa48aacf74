#include "gdcn/experiment.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gdcn/errors.hpp"

namespace gdcn {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_table(const fs::path& path, const Tensor& values, const std::optional<std::vector<int>>& labels) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t j = 0; j < values.cols(); ++j) out << (j ? ",e" : "e") << j;
  if (labels) out << ",label";
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < values.rows(); ++i) {
    for (std::size_t j = 0; j < values.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", values(i, j));
      if (j) out << ',';
      out << buf;
    }
    if (labels) out << ',' << (*labels)[i];
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

}  // namespace

Evaluation evaluate(const Model& model, const MultiViewDataset& ds) {
  model.check_compatible(ds);
  const ModelConfig& cfg = model.config();
  if (ds.n_clusters == 0 || ds.n_clusters > ds.n_samples)
    throw InvalidArgument("evaluate: cannot form " + std::to_string(ds.n_clusters) + " clusters from " +
                          std::to_string(ds.n_samples) + " samples");
  Evaluation e;
  e.clustering = kmeans(model.representation(ds), ds.n_clusters, {cfg.eval.kmeans_restarts, 300, cfg.seed});
  if (ds.labels) e.metrics = evaluate_clustering(e.clustering.assignments, *ds.labels);
  return e;
}

nlohmann::ordered_json experiment_metadata(const Model& model, const MultiViewDataset& ds) {
  nlohmann::ordered_json j;
  j["model"] = model_config_to_json(model.config());
  j["dataset"]["name"] = ds.name;
  j["dataset"]["n_samples"] = ds.n_samples;
  j["dataset"]["n_views"] = ds.n_views();
  j["dataset"]["n_clusters"] = ds.n_clusters;
  j["dataset"]["view_dims"] = ds.view_dims;
  j["dataset"]["has_labels"] = ds.labels.has_value();
  return j;
}

RunResult run_experiment(Model& model, const MultiViewDataset& ds, const fs::path& out_dir,
                         const EpochCallback& on_epoch) {
  model.check_compatible(ds);
  RunResult result;
  const bool files = !out_dir.empty();
  std::ofstream log;
  if (files) {
    ensure_dir(out_dir);
    write_text(out_dir / "config.json", experiment_metadata(model, ds).dump(2) + "\n");
    log.open(out_dir / "epoch_log.csv");
    if (!log) throw IoError("cannot write " + (out_dir / "epoch_log.csv").string());
    log << epoch_log_header() << '\n';
  }
  const EpochCallback record = [&](const EpochLog& row) {
    if (files) {
      log << format_epoch_log_row(row) << '\n';
      log.flush();
      if (!log) throw IoError("failed writing " + (out_dir / "epoch_log.csv").string());
    }
    if (on_epoch) on_epoch(row);
  };

  pretrain(model, ds, result.training, record);
  if (files) save_checkpoint(model, out_dir / "pretrain.ckpt");
  finetune(model, ds, result.training, record);
  if (files) save_checkpoint(model, out_dir / "final.ckpt");

  result.evaluation = evaluate(model, ds);
  if (files && result.evaluation.metrics) write_text(out_dir / "metrics.json", to_json(*result.evaluation.metrics) + "\n");
  return result;
}

EmbeddingKind parse_embedding_kind(const std::string& text) {
  if (text == "fused") return EmbeddingKind::fused;
  if (text == "projected") return EmbeddingKind::projected;
  if (text == "per-view") return EmbeddingKind::per_view;
  throw InvalidArgument("unknown embedding kind '" + text + "' (expected fused, projected or per-view)");
}

std::string to_string(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::fused: return "fused";
    case EmbeddingKind::projected: return "projected";
    case EmbeddingKind::per_view: return "per-view";
  }
  return "fused";
}

std::vector<fs::path> export_embeddings(const Model& model, const MultiViewDataset& ds, EmbeddingKind kind,
                                        const fs::path& out_dir) {
  model.check_compatible(ds);
  ensure_dir(out_dir);
  std::vector<fs::path> written;
  switch (kind) {
    case EmbeddingKind::fused:
      written.push_back(out_dir / "fused.csv");
      write_table(written.back(), model.fused(ds), ds.labels);
      break;
    case EmbeddingKind::projected:
      written.push_back(out_dir / "projected.csv");
      write_table(written.back(), model.projected(ds), ds.labels);
      break;
    case EmbeddingKind::per_view: {
      const std::vector<Tensor> latents = model.encode(ds);
      for (std::size_t m = 0; m < latents.size(); ++m) {
        written.push_back(out_dir / ("view_" + std::to_string(m) + ".csv"));
        write_table(written.back(), latents[m], ds.labels);
      }
      break;
    }
  }
  return written;
}

EmbeddingTable read_embeddings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string file = path.string();
  std::string line;
  if (!std::getline(in, line)) throw FormatError(file, 1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::size_t cols = 0;
  bool has_label = false;
  {
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      if (cell == "label") has_label = true;
      else ++cols;
    }
  }
  EmbeddingTable table;
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = p + line.size();
    for (std::size_t j = 0; j < cols + (has_label ? 1 : 0); ++j) {
      if (j > 0) {
        if (p == end || *p != ',') throw FormatError(file, line_no, "expected " + std::to_string(cols) + " values");
        ++p;
      }
      if (j < cols) {
        double v = 0.0;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc()) throw FormatError(file, line_no, "bad number");
        values.push_back(v);
        p = next;
      } else {
        int v = 0;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc()) throw FormatError(file, line_no, "bad label");
        labels.push_back(v);
        p = next;
      }
    }
    if (p != end) throw FormatError(file, line_no, "trailing content");
    ++rows;
  }
  table.values = Tensor(Shape{rows, cols}, std::move(values));
  if (has_label) table.labels = std::move(labels);
  return table;
}

}  // namespace gdcn
