#include <cmath>
#include <cstring>
#include <exception>
#include <limits>
#include <memory>
#include <new>
#include <string>

#include "gdcn/errors.hpp"
#include "gdcn/experiment.hpp"
#include "gdcn/gdcn.h"

struct gdcn_dataset {
  gdcn::MultiViewDataset ds;
};

struct gdcn_model {
  gdcn::Model model;
};

namespace {

thread_local std::string last_error;

gdcn_status status_of(gdcn::ErrorCode code) {
  switch (code) {
    case gdcn::ErrorCode::config: return GDCN_ERR_CONFIG;
    case gdcn::ErrorCode::shape: return GDCN_ERR_SHAPE;
    case gdcn::ErrorCode::numerical: return GDCN_ERR_NUMERICAL;
    case gdcn::ErrorCode::io: return GDCN_ERR_IO;
    case gdcn::ErrorCode::format: return GDCN_ERR_FORMAT;
    case gdcn::ErrorCode::invalid_argument: return GDCN_ERR_INVALID_ARGUMENT;
  }
  return GDCN_ERR_INTERNAL;
}

template <class F>
gdcn_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return GDCN_OK;
  } catch (const gdcn::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("config: ") + e.what();
    return GDCN_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return GDCN_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return GDCN_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return GDCN_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw gdcn::InvalidArgument(std::string(what) + " must not be null");
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void fill(gdcn_metrics* out, const gdcn::MetricsReport& r) {
  out->acc = r.acc;
  out->nmi = r.nmi;
  out->pur = r.pur;
}

}  // namespace

extern "C" {

const char* gdcn_version(void) { return "0.1.0"; }

const char* gdcn_last_error(void) { return last_error.c_str(); }

void gdcn_string_free(char* s) { std::free(s); }

gdcn_status gdcn_dataset_generate(const gdcn_synthetic_spec* spec, gdcn_dataset** out) {
  return guarded([&] {
    require(spec, "spec");
    require(out, "out");
    gdcn::SyntheticSpec s;
    s.n_clusters = spec->n_clusters;
    s.per_cluster = spec->per_cluster;
    if (spec->n_views > 0) {
      require(spec->view_dims, "spec->view_dims");
      s.view_dims.assign(spec->view_dims, spec->view_dims + spec->n_views);
    }
    s.separation = spec->separation;
    s.seed = spec->seed;
    *out = new gdcn_dataset{gdcn::generate_synthetic(s)};
  });
}

gdcn_status gdcn_dataset_load(const char* dir, gdcn_dataset** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    *out = new gdcn_dataset{gdcn::load_dataset(dir)};
  });
}

gdcn_status gdcn_dataset_save(const gdcn_dataset* ds, const char* dir) {
  return guarded([&] {
    require(ds, "dataset");
    require(dir, "dir");
    gdcn::save_dataset(ds->ds, dir);
  });
}

gdcn_status gdcn_dataset_corrupt(const gdcn_dataset* ds, const gdcn_corruption_spec* spec, gdcn_dataset** out) {
  return guarded([&] {
    require(ds, "dataset");
    require(spec, "spec");
    require(out, "out");
    gdcn::CorruptionSpec s;
    s.noise_sigma = spec->noise_sigma;
    s.noise_fraction = spec->noise_fraction;
    s.missing_fraction = spec->missing_fraction;
    s.seed = spec->seed;
    *out = new gdcn_dataset{gdcn::corrupt(ds->ds, s)};
  });
}

gdcn_status gdcn_dataset_normalize(gdcn_dataset* ds) {
  return guarded([&] {
    require(ds, "dataset");
    for (gdcn::Tensor& v : ds->ds.views) gdcn::normalize_columns(v);
  });
}

gdcn_status gdcn_dataset_info(const gdcn_dataset* ds, size_t* n_samples, size_t* n_views, size_t* n_clusters,
                              int* has_labels) {
  return guarded([&] {
    require(ds, "dataset");
    if (n_samples) *n_samples = ds->ds.n_samples;
    if (n_views) *n_views = ds->ds.n_views();
    if (n_clusters) *n_clusters = ds->ds.n_clusters;
    if (has_labels) *has_labels = ds->ds.labels.has_value() ? 1 : 0;
  });
}

gdcn_status gdcn_dataset_view_dim(const gdcn_dataset* ds, size_t view, size_t* dim) {
  return guarded([&] {
    require(ds, "dataset");
    require(dim, "dim");
    if (view >= ds->ds.n_views())
      throw gdcn::InvalidArgument("view " + std::to_string(view) + " out of range (" +
                                  std::to_string(ds->ds.n_views()) + " views)");
    *dim = ds->ds.view_dims[view];
  });
}

void gdcn_dataset_free(gdcn_dataset* ds) { delete ds; }

gdcn_status gdcn_model_create(const gdcn_dataset* ds, const char* config_json, gdcn_model** out) {
  return guarded([&] {
    require(ds, "dataset");
    require(out, "out");
    nlohmann::json j = nlohmann::json::object();
    if (config_json && *config_json) j = nlohmann::json::parse(config_json);
    *out = new gdcn_model{gdcn::Model(ds->ds.view_dims, gdcn::parse_model_config(j))};
  });
}

gdcn_status gdcn_model_load(const char* checkpoint, gdcn_model** out) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    *out = new gdcn_model{gdcn::load_checkpoint(checkpoint)};
  });
}

gdcn_status gdcn_model_save(const gdcn_model* model, const char* checkpoint) {
  return guarded([&] {
    require(model, "model");
    require(checkpoint, "checkpoint");
    gdcn::save_checkpoint(model->model, checkpoint);
  });
}

gdcn_status gdcn_model_config_json(const gdcn_model* model, char** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = duplicate(gdcn::model_config_to_json(model->model.config()).dump());
  });
}

gdcn_status gdcn_model_train(gdcn_model* model, const gdcn_dataset* ds, const char* out_dir,
                             gdcn_epoch_callback callback, void* user, gdcn_metrics* metrics) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    gdcn::EpochCallback on_epoch;
    if (callback) {
      on_epoch = [&](const gdcn::EpochLog& row) {
        callback(row.epoch, row.phase == gdcn::Phase::finetune ? 1 : 0, row.loss_rec, row.loss_cl, row.loss_total,
                 row.acc ? *row.acc : std::numeric_limits<double>::quiet_NaN(), user);
      };
    }
    const gdcn::RunResult r =
        gdcn::run_experiment(model->model, ds->ds, out_dir ? std::filesystem::path(out_dir) : std::filesystem::path(),
                             on_epoch);
    if (metrics && r.evaluation.metrics) fill(metrics, *r.evaluation.metrics);
  });
}

gdcn_status gdcn_model_evaluate(const gdcn_model* model, const gdcn_dataset* ds, gdcn_metrics* metrics) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    require(metrics, "metrics");
    if (!ds->ds.labels) throw gdcn::InvalidArgument("evaluate: dataset has no labels");
    fill(metrics, *gdcn::evaluate(model->model, ds->ds).metrics);
  });
}

gdcn_status gdcn_model_cluster(const gdcn_model* model, const gdcn_dataset* ds, int* assignments, size_t capacity) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    require(assignments, "assignments");
    if (capacity < ds->ds.n_samples)
      throw gdcn::InvalidArgument("cluster: buffer holds " + std::to_string(capacity) + " entries, need " +
                                  std::to_string(ds->ds.n_samples));
    const gdcn::Evaluation e = gdcn::evaluate(model->model, ds->ds);
    std::copy(e.clustering.assignments.begin(), e.clustering.assignments.end(), assignments);
  });
}

gdcn_status gdcn_model_export_embeddings(const gdcn_model* model, const gdcn_dataset* ds, const char* which,
                                         const char* out_dir) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    require(which, "which");
    require(out_dir, "out_dir");
    gdcn::export_embeddings(model->model, ds->ds, gdcn::parse_embedding_kind(which), out_dir);
  });
}

gdcn_status gdcn_model_embed(const gdcn_model* model, const gdcn_dataset* ds, double* out, size_t capacity,
                             size_t* rows, size_t* cols) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    const gdcn::Tensor z = model->model.fused(ds->ds);
    if (rows) *rows = z.rows();
    if (cols) *cols = z.cols();
    if (capacity == 0) return;
    require(out, "out");
    if (capacity < z.size())
      throw gdcn::InvalidArgument("embed: buffer holds " + std::to_string(capacity) + " values, need " +
                                  std::to_string(z.size()));
    std::copy(z.values().begin(), z.values().end(), out);
  });
}

void gdcn_model_free(gdcn_model* model) { delete model; }

gdcn_status gdcn_metrics_to_json(const gdcn_metrics* metrics, char** out) {
  return guarded([&] {
    require(metrics, "metrics");
    require(out, "out");
    *out = duplicate(gdcn::to_json(gdcn::MetricsReport{metrics->acc, metrics->nmi, metrics->pur}));
  });
}

}  // extern "C"
