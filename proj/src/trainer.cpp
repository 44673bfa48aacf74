#include "gdcn/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "gdcn/cluster_metrics.hpp"
#include "gdcn/errors.hpp"

namespace gdcn {

namespace {

constexpr char kCheckpointMagic[8] = {'G', 'D', 'C', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;
// Salt separating training-time fusion noise from the evaluation stream.
constexpr std::uint64_t kTrainNoiseSalt = 0x747261696e;

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

Mlp::Bound take_mlp(const Mlp& mlp, std::span<const Var> vars, std::size_t& pos) {
  Mlp::Bound b;
  for (std::size_t l = 0; l < mlp.depth(); ++l) {
    b.weights.push_back(vars[pos++]);
    b.biases.push_back(vars[pos++]);
  }
  return b;
}

std::size_t count_params(const Mlp& mlp) { return 2 * mlp.depth(); }

void run_phase(Model& model, const MultiViewDataset& ds, TrainingState& state, Phase phase,
               const EpochCallback& on_epoch) {
  model.check_compatible(ds);
  const ModelConfig& cfg = model.config();
  const std::size_t epochs = phase == Phase::pretrain ? cfg.train.pretrain_epochs : cfg.train.finetune_epochs;
  if (epochs == 0) return;
  const std::size_t n = ds.n_samples;
  if (n < 2) throw InvalidArgument("training needs at least 2 samples, got " + std::to_string(n));

  const AdamConfig adam{cfg.train.learning_rate, cfg.train.beta1, cfg.train.beta2, cfg.train.epsilon};
  AdamState optimizer;
  const std::vector<ParamRef> params = model.parameters();
  std::vector<std::size_t> trained;
  for (std::size_t p = 0; p < params.size(); ++p)
    if (model.trainable(params[p].name, phase)) trained.push_back(p);

  for (std::size_t e = 0; e < epochs; ++e) {
    const std::size_t epoch = state.epochs_done;
    const auto batches = epoch_batches(n, cfg.train.batch_size, cfg.seed, epoch);
    const std::uint64_t noise_seed = combine_seed(combine_seed(cfg.sgdf.seed, kTrainNoiseSalt), epoch);
    double rec_sum = 0.0;
    double cl_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& rows = batches[b];
      std::vector<Tensor> views;
      views.reserve(ds.n_views());
      for (const Tensor& v : ds.views) views.push_back(gather_rows(v, rows));
      const std::vector<std::uint64_t> ids(rows.begin(), rows.end());

      Tape tape;
      ParamBindings sink;
      const Model::Bound bound = model.bind(tape, sink);
      std::vector<Var> inputs;
      for (const Tensor& v : views) inputs.push_back(tape.constant_ref(v));
      const BatchObjective obj = batch_objective(model, bound, inputs, ids, phase, noise_seed);

      const double rec = obj.reconstruction.value().item();
      const double cl = obj.contrastive.valid() ? obj.contrastive.value().item() : 0.0;
      const std::string where = "epoch " + std::to_string(epoch) + " (" + to_string(phase) + "), batch " +
                                std::to_string(b);
      if (!std::isfinite(rec) || !std::isfinite(cl))
        throw NumericalError("non-finite loss at " + where + ": rec=" + std::to_string(rec) +
                             " cl=" + std::to_string(cl));

      const Gradients grads = backward(tape, obj.total);
      std::vector<Tensor*> targets;
      std::vector<const Tensor*> deltas;
      for (std::size_t p : trained) {
        targets.push_back(sink.tensors[p]);
        deltas.push_back(&grads[sink.vars[p]]);
      }
      try {
        optimizer_step(targets, deltas, optimizer, adam);
      } catch (const NumericalError& err) {
        throw NumericalError(std::string(err.what()) + " at " + where);
      }
      rec_sum += rec * static_cast<double>(rows.size());
      cl_sum += cl * static_cast<double>(rows.size());
    }

    EpochLog log;
    log.epoch = epoch;
    log.phase = phase;
    log.loss_rec = rec_sum / static_cast<double>(n);
    log.loss_cl = cl_sum / static_cast<double>(n);
    log.loss_total = log.loss_rec + log.loss_cl;
    const std::size_t every = cfg.train.log_acc_every;
    if (every > 0 && ((e + 1) % every == 0 || e + 1 == epochs)) log.acc = representation_accuracy(model, ds);
    state.logs.push_back(log);
    ++state.epochs_done;
    if (on_epoch) on_epoch(log);
  }
}

void write_raw(std::ostream& out, const void* data, std::size_t bytes) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

template <class T>
void write_pod(std::ostream& out, T value) {
  write_raw(out, &value, sizeof value);
}

class CheckpointReader {
 public:
  CheckpointReader(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}

  void read(void* data, std::size_t bytes) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in_.gcount()) != bytes) fail("truncated checkpoint");
  }

  template <class T>
  T pod() {
    T value;
    read(&value, sizeof value);
    return value;
  }

  std::string text(std::uint64_t limit) {
    const auto size = pod<std::uint64_t>();
    if (size > limit) fail("implausible string length " + std::to_string(size));
    std::string s(size, '\0');
    read(s.data(), size);
    return s;
  }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(file_, 0, what); }

 private:
  std::istream& in_;
  std::string file_;
};

}  // namespace

std::string to_string(Phase phase) { return phase == Phase::pretrain ? "pretrain" : "finetune"; }

Model::Model(std::vector<std::size_t> view_dims, ModelConfig config)
    : view_dims_(std::move(view_dims)), config_(std::move(config)), schedule_(config_.sgdf.total_steps) {
  config_.validate();
  if (view_dims_.empty()) throw InvalidArgument("model: need at least one view");
  Rng rng(config_.seed, 1);
  const std::size_t d = config_.ae.latent_dim;
  std::vector<std::size_t> latent_dims;
  for (std::size_t m = 0; m < view_dims_.size(); ++m) {
    if (view_dims_[m] == 0) throw InvalidArgument("model: view " + std::to_string(m) + " has zero width");
    autoencoders_.emplace_back(m, view_dims_[m], d, config_.ae.hidden, rng);
    latent_dims.push_back(d);
  }
  denoiser_ = Denoiser(d, d * view_dims_.size(), config_.sgdf.hidden, rng);
  heads_ = ProjectionHeads(fused_dim(), latent_dims, config_.cl.h_dim, rng);
}

std::size_t Model::fused_dim() const noexcept {
  const std::size_t d = config_.ae.latent_dim;
  return config_.ablation == Ablation::no_sgdf ? d * view_dims_.size() : d;
}

SamplerConfig Model::sampler(std::uint64_t noise_seed) const {
  SamplerConfig s;
  s.chains = config_.sgdf.chains;
  s.grid = make_grid(config_.sgdf.total_steps, config_.sgdf.grid_points);
  s.mode = config_.sgdf.mode;
  s.seed = noise_seed;
  return s;
}

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> out;
  for (ViewAutoencoder& ae : autoencoders_) ae.collect(out);
  denoiser_.collect(out);
  heads_.collect(out);
  return out;
}

std::vector<const Tensor*> Model::parameter_values() const {
  std::vector<const Tensor*> out;
  for (const ParamRef& p : const_cast<Model*>(this)->parameters()) out.push_back(p.tensor);
  return out;
}

bool Model::trainable(const std::string& name, Phase phase) const {
  if (starts_with(name, "view")) return true;
  if (phase == Phase::pretrain) return false;
  if (starts_with(name, "denoiser")) return config_.ablation == Ablation::none;
  if (starts_with(name, "heads")) return config_.ablation != Ablation::no_cl;
  return false;
}

Model::Bound Model::assemble(std::span<const Var> vars) const {
  std::size_t expected = count_params(denoiser_.mlp()) + count_params(heads_.fused_head());
  for (const ViewAutoencoder& ae : autoencoders_) expected += count_params(ae.encoder()) + count_params(ae.decoder());
  for (std::size_t m = 0; m < heads_.n_views(); ++m) expected += count_params(heads_.view_head(m));
  if (vars.size() != expected)
    throw ShapeError("model: " + std::to_string(vars.size()) + " parameter bindings for " +
                     std::to_string(expected) + " parameters");
  Bound b;
  std::size_t pos = 0;
  for (const ViewAutoencoder& ae : autoencoders_) {
    ViewAutoencoder::Bound ab;
    ab.encoder = take_mlp(ae.encoder(), vars, pos);
    ab.decoder = take_mlp(ae.decoder(), vars, pos);
    b.autoencoders.push_back(std::move(ab));
  }
  b.denoiser = take_mlp(denoiser_.mlp(), vars, pos);
  b.heads.fused = take_mlp(heads_.fused_head(), vars, pos);
  for (std::size_t m = 0; m < heads_.n_views(); ++m) b.heads.views.push_back(take_mlp(heads_.view_head(m), vars, pos));
  return b;
}

Model::Bound Model::bind(Tape& tape, ParamBindings& sink) {
  const std::size_t first = sink.vars.size();
  for (const ParamRef& p : parameters()) sink.bind(tape, *p.tensor);
  return assemble(std::span<const Var>(sink.vars).subspan(first));
}

Model::Bound Model::bind_frozen(Tape& tape) const {
  std::vector<Var> vars;
  for (const Tensor* t : parameter_values()) vars.push_back(tape.constant_ref(*t));
  return assemble(vars);
}

void Model::check_compatible(const MultiViewDataset& ds) const {
  if (ds.view_dims != view_dims_) {
    std::vector<std::size_t> got = ds.view_dims;
    auto join = [](const std::vector<std::size_t>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    throw ShapeError("dataset view widths [" + join(got) + "] do not match model widths [" + join(view_dims_) + "]");
  }
}

std::vector<Tensor> Model::encode(const MultiViewDataset& ds) const {
  check_compatible(ds);
  std::vector<Tensor> latents;
  for (std::size_t m = 0; m < autoencoders_.size(); ++m) latents.push_back(autoencoders_[m].encode(ds.views[m]));
  return latents;
}

Tensor Model::fused(const MultiViewDataset& ds) const {
  const std::vector<Tensor> latents = encode(ds);
  if (config_.ablation == Ablation::no_sgdf) return build_condition(latents);
  return fuse(latents, denoiser_, schedule_, sampler(config_.sgdf.seed));
}

Tensor Model::projected(const MultiViewDataset& ds) const {
  const Tensor z = fused(ds);
  Tape tape;
  const Var fused_var = tape.constant_ref(z);
  const Mlp::Bound head = heads_.fused_head().bind_frozen(tape);
  return normalize_rows(heads_.fused_head().forward(head, fused_var)).value();
}

Tensor Model::representation(const MultiViewDataset& ds) const {
  return config_.eval.representation == Representation::fused ? fused(ds) : projected(ds);
}

BatchObjective batch_objective(const Model& model, const Model::Bound& bound, std::span<const Var> views,
                               std::span<const std::uint64_t> sample_ids, Phase phase, std::uint64_t noise_seed,
                               const Tensor* fixed_similarity) {
  if (views.size() != model.n_views())
    throw ShapeError("batch has " + std::to_string(views.size()) + " views, model expects " +
                     std::to_string(model.n_views()));
  const ModelConfig& cfg = model.config();
  const std::size_t n = views.front().value().rows();
  std::vector<Var> latents;
  const Var rec = scale(reconstruction_loss(model.autoencoders(), bound.autoencoders, views, &latents),
                        1.0 / static_cast<double>(n));
  if (phase == Phase::pretrain || cfg.ablation == Ablation::no_cl) return {rec, Var(), rec};

  const Var fused = cfg.ablation == Ablation::no_sgdf
                        ? build_condition(latents)
                        : fuse(latents, model.denoiser(), bound.denoiser, model.schedule(), model.sampler(noise_seed),
                               sample_ids);
  const ProjectionHeads::Projections proj = model.heads().project(bound.heads, fused, latents);
  const Tensor similarity = fixed_similarity ? *fixed_similarity : compute_similarity(proj.fused.value());
  const Var cl = contrastive_loss(proj.fused, proj.views, similarity, cfg.cl);
  return {rec, cl, add(rec, cl)};
}

void optimizer_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
                    const AdamConfig& config) {
  if (params.size() != grads.size())
    throw ShapeError("optimizer_step: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients");
  if (!state.slots.empty() && state.slots.size() != params.size())
    throw ShapeError("optimizer_step: state holds " + std::to_string(state.slots.size()) + " slots for " +
                     std::to_string(params.size()) + " parameters");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p]->shape() != grads[p]->shape())
      throw ShapeError("optimizer_step: parameter " + std::to_string(p) + " has shape " +
                       to_string(params[p]->shape()) + ", gradient " + to_string(grads[p]->shape()));
    if (!state.slots.empty() && state.slots[p].m.shape() != params[p]->shape())
      throw ShapeError("optimizer_step: state shape mismatch for parameter " + std::to_string(p));
    if (!grads[p]->all_finite()) throw NumericalError("non-finite gradient for parameter " + std::to_string(p));
  }
  if (state.slots.empty()) {
    for (Tensor* p : params) state.slots.push_back({Tensor(p->shape()), Tensor(p->shape()), 0});
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    AdamSlot& slot = state.slots[p];
    ++slot.step;
    const double t = static_cast<double>(slot.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    Tensor& w = *params[p];
    const Tensor& g = *grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      slot.m[i] = config.beta1 * slot.m[i] + (1.0 - config.beta1) * g[i];
      slot.v[i] = config.beta2 * slot.v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = slot.m[i] / c1;
      const double v_hat = slot.v[i] / c2;
      w[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  if (batch_size == 0) throw InvalidArgument("epoch_batches: batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, 100 + epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

void pretrain(Model& model, const MultiViewDataset& ds, TrainingState& state, const EpochCallback& on_epoch) {
  run_phase(model, ds, state, Phase::pretrain, on_epoch);
}

void finetune(Model& model, const MultiViewDataset& ds, TrainingState& state, const EpochCallback& on_epoch) {
  run_phase(model, ds, state, Phase::finetune, on_epoch);
}

std::optional<double> representation_accuracy(const Model& model, const MultiViewDataset& ds) {
  if (!ds.labels || ds.n_clusters == 0 || ds.n_clusters > ds.n_samples) return std::nullopt;
  const ModelConfig& cfg = model.config();
  const ClusteringResult r =
      kmeans(model.representation(ds), ds.n_clusters, {cfg.eval.kmeans_restarts, 300, cfg.seed});
  return accuracy(r.assignments, *ds.labels);
}

std::string epoch_log_header() { return "epoch,phase,loss_rec,loss_cl,loss_total,acc"; }

std::string format_epoch_log_row(const EpochLog& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%.17g,", row.epoch, to_string(row.phase).c_str(), row.loss_rec,
                row.loss_cl, row.loss_total);
  std::string line = buf;
  if (row.acc) {
    std::snprintf(buf, sizeof buf, "%.17g", *row.acc);
    line += buf;
  }
  return line;
}

void write_epoch_log(const std::filesystem::path& path, std::span<const EpochLog> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << epoch_log_header() << '\n';
  for (const EpochLog& row : rows) out << format_epoch_log_row(row) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_raw(out, kCheckpointMagic, sizeof kCheckpointMagic);
  write_pod(out, kCheckpointVersion);
  const std::string config = model_config_to_json(model.config()).dump();
  write_pod<std::uint64_t>(out, config.size());
  write_raw(out, config.data(), config.size());
  write_pod<std::uint64_t>(out, model.n_views());
  for (std::size_t d : model.view_dims()) write_pod<std::uint64_t>(out, d);
  const std::vector<ParamRef> params = const_cast<Model&>(model).parameters();
  write_pod<std::uint64_t>(out, params.size());
  for (const ParamRef& p : params) {
    write_pod<std::uint64_t>(out, p.name.size());
    write_raw(out, p.name.data(), p.name.size());
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor->rank()));
    for (std::size_t d : p.tensor->shape()) write_pod<std::uint64_t>(out, d);
    write_raw(out, p.tensor->data(), p.tensor->size() * sizeof(double));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  CheckpointReader r(in, path.string());
  char magic[sizeof kCheckpointMagic];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) r.fail("not a checkpoint file");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));

  ModelConfig config;
  try {
    config = parse_model_config(nlohmann::json::parse(r.text(1 << 20)));
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad embedded config: ") + e.what());
  } catch (const ConfigError& e) {
    r.fail(std::string("bad embedded config: ") + e.what());
  }
  const auto n_views = r.pod<std::uint64_t>();
  if (n_views == 0 || n_views > 4096) r.fail("implausible view count " + std::to_string(n_views));
  std::vector<std::size_t> dims;
  for (std::uint64_t m = 0; m < n_views; ++m) dims.push_back(r.pod<std::uint64_t>());

  Model model(dims, config);
  std::vector<ParamRef> params = model.parameters();
  const auto count = r.pod<std::uint64_t>();
  if (count != params.size())
    r.fail("checkpoint holds " + std::to_string(count) + " tensors, model expects " + std::to_string(params.size()));
  for (ParamRef& p : params) {
    const std::string name = r.text(4096);
    if (name != p.name) r.fail("expected tensor '" + p.name + "', found '" + name + "'");
    const auto rank = r.pod<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.pod<std::uint64_t>();
    if (shape != p.tensor->shape())
      r.fail("tensor '" + name + "' has shape " + to_string(shape) + ", expected " + to_string(p.tensor->shape()));
    r.read(p.tensor->data(), p.tensor->size() * sizeof(double));
  }
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes after last tensor");
  return model;
}

}  // namespace gdcn
