#include "gdcn/config.hpp"

#include <set>

#include "gdcn/errors.hpp"

namespace gdcn {

using nlohmann::json;

namespace {

void merge_into(json& target, const std::string& path, const json& value);

json unflatten_object(const json& object, const std::string& prefix) {
  json out = json::object();
  for (const auto& [key, value] : object.items()) {
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    merge_into(out, full.substr(prefix.empty() ? 0 : prefix.size() + 1), value.is_object() ? unflatten_object(value, full) : value);
  }
  return out;
}

void merge_into(json& target, const std::string& path, const json& value) {
  const auto dot = path.find('.');
  if (dot == std::string::npos) {
    if (target.contains(path) && target[path].is_object() && value.is_object()) {
      for (const auto& [k, v] : value.items()) merge_into(target[path], k, v);
    } else if (target.contains(path) && (target[path].is_object() || value.is_object())) {
      throw ConfigError(path, "conflicting definitions (object and value)");
    } else {
      target[path] = value;
    }
    return;
  }
  const std::string head = path.substr(0, dot);
  if (!target.contains(head)) target[head] = json::object();
  if (!target[head].is_object()) throw ConfigError(head, "conflicting definitions (object and value)");
  merge_into(target[head], path.substr(dot + 1), value);
}

class Reader {
 public:
  Reader(const json& object, std::string prefix) : object_(object), prefix_(std::move(prefix)) {
    if (!object_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "expected an object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return object_.contains(key);
  }

  std::string key(const char* k) const { return prefix_.empty() ? k : prefix_ + "." + k; }

  void count(const char* k, std::size_t& out) {
    if (!has(k)) return;
    const json& v = object_.at(k);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(key(k), "expected a non-negative integer");
    out = v.get<std::size_t>();
  }

  void seed(const char* k, std::uint64_t& out) {
    if (!has(k)) return;
    const json& v = object_.at(k);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      throw ConfigError(key(k), "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  void number(const char* k, double& out) {
    if (!has(k)) return;
    const json& v = object_.at(k);
    if (!v.is_number()) throw ConfigError(key(k), "expected a number");
    out = v.get<double>();
  }

  void flag(const char* k, bool& out) {
    if (!has(k)) return;
    const json& v = object_.at(k);
    if (!v.is_boolean()) throw ConfigError(key(k), "expected true or false");
    out = v.get<bool>();
  }

  void text(const char* k, std::string& out) {
    if (!has(k)) return;
    const json& v = object_.at(k);
    if (!v.is_string()) throw ConfigError(key(k), "expected a string");
    out = v.get<std::string>();
  }

  void widths(const char* k, std::vector<std::size_t>& out) {
    if (!has(k)) return;
    const json& v = object_.at(k);
    if (!v.is_array()) throw ConfigError(key(k), "expected an array of positive integers");
    std::vector<std::size_t> w;
    for (const json& e : v) {
      if (!e.is_number_integer() || e.get<long long>() <= 0)
        throw ConfigError(key(k), "expected an array of positive integers");
      w.push_back(e.get<std::size_t>());
    }
    out = std::move(w);
  }

  const json* section(const char* k) {
    if (!has(k)) return nullptr;
    return &object_.at(k);
  }

  void finish() const {
    for (const auto& [k, v] : object_.items())
      if (!seen_.count(k)) throw ConfigError(key(k.c_str()), "unknown key");
  }

 private:
  const json& object_;
  std::string prefix_;
  std::set<std::string> seen_;
};

}  // namespace

json unflatten(const json& input) {
  if (!input.is_object()) throw ConfigError("<root>", "expected a JSON object");
  return unflatten_object(input, "");
}

std::string to_string(Ablation ablation) {
  switch (ablation) {
    case Ablation::none: return "none";
    case Ablation::no_sgdf: return "no-sgdf";
    case Ablation::no_cl: return "no-cl";
  }
  return "none";
}

std::string to_string(Representation representation) {
  return representation == Representation::fused ? "fused" : "projected";
}

void ModelConfig::validate() const {
  if (ae.latent_dim == 0) throw ConfigError("ae.latent_dim", "must be positive");
  if (sgdf.total_steps < 2) throw ConfigError("sgdf.T", "must be at least 2");
  if (sgdf.grid_points < 2) throw ConfigError("sgdf.K", "must be at least 2");
  if (sgdf.grid_points > sgdf.total_steps) throw ConfigError("sgdf.K", "must not exceed sgdf.T");
  if (sgdf.chains < 1) throw ConfigError("sgdf.B", "must be at least 1");
  if (!(cl.temperature > 0.0)) throw ConfigError("cl.temperature", "must be positive");
  if (cl.h_dim == 0) throw ConfigError("cl.h_dim", "must be positive");
  if (!cl.similarity_detached) throw ConfigError("cl.similarity_detached", "only detached similarity is supported");
  if (train.batch_size < 2) throw ConfigError("train.batch_size", "must be at least 2");
  if (!(train.learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be positive");
  if (!(train.beta1 >= 0.0 && train.beta1 < 1.0)) throw ConfigError("train.beta1", "must lie in [0, 1)");
  if (!(train.beta2 >= 0.0 && train.beta2 < 1.0)) throw ConfigError("train.beta2", "must lie in [0, 1)");
  if (!(train.epsilon > 0.0)) throw ConfigError("train.epsilon", "must be positive");
  if (eval.kmeans_restarts < 1) throw ConfigError("eval.kmeans_restarts", "must be at least 1");
}

ModelConfig parse_model_config(const json& input) {
  const json root = unflatten(input);
  ModelConfig c;
  Reader top(root, "");
  top.seed("seed", c.seed);
  c.sgdf.seed = c.seed;

  std::string text;
  if (top.has("ablation")) {
    top.text("ablation", text);
    if (text == "none") c.ablation = Ablation::none;
    else if (text == "no-sgdf") c.ablation = Ablation::no_sgdf;
    else if (text == "no-cl") c.ablation = Ablation::no_cl;
    else throw ConfigError("ablation", "expected none, no-sgdf or no-cl, got '" + text + "'");
  }
  if (const json* s = top.section("ae")) {
    Reader r(*s, "ae");
    r.widths("hidden", c.ae.hidden);
    r.count("latent_dim", c.ae.latent_dim);
    r.finish();
  }
  if (const json* s = top.section("sgdf")) {
    Reader r(*s, "sgdf");
    r.count("T", c.sgdf.total_steps);
    r.count("K", c.sgdf.grid_points);
    r.count("B", c.sgdf.chains);
    r.seed("seed", c.sgdf.seed);
    r.widths("hidden", c.sgdf.hidden);
    if (r.has("mode")) {
      r.text("mode", text);
      try {
        c.sgdf.mode = parse_sampler_mode(text);
      } catch (const Error& e) {
        throw ConfigError("sgdf.mode", e.what());
      }
    }
    r.finish();
  }
  if (const json* s = top.section("cl")) {
    Reader r(*s, "cl");
    r.number("temperature", c.cl.temperature);
    r.count("h_dim", c.cl.h_dim);
    r.flag("similarity_detached", c.cl.similarity_detached);
    r.finish();
  }
  if (const json* s = top.section("train")) {
    Reader r(*s, "train");
    r.count("pretrain_epochs", c.train.pretrain_epochs);
    r.count("finetune_epochs", c.train.finetune_epochs);
    r.count("batch_size", c.train.batch_size);
    r.number("learning_rate", c.train.learning_rate);
    r.number("beta1", c.train.beta1);
    r.number("beta2", c.train.beta2);
    r.number("epsilon", c.train.epsilon);
    r.count("log_acc_every", c.train.log_acc_every);
    r.finish();
  }
  if (const json* s = top.section("eval")) {
    Reader r(*s, "eval");
    if (r.has("representation")) {
      r.text("representation", text);
      if (text == "fused") c.eval.representation = Representation::fused;
      else if (text == "projected") c.eval.representation = Representation::projected;
      else throw ConfigError("eval.representation", "expected fused or projected, got '" + text + "'");
    }
    r.count("kmeans_restarts", c.eval.kmeans_restarts);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["ablation"] = to_string(c.ablation);
  j["ae"]["hidden"] = c.ae.hidden;
  j["ae"]["latent_dim"] = c.ae.latent_dim;
  j["sgdf"]["T"] = c.sgdf.total_steps;
  j["sgdf"]["K"] = c.sgdf.grid_points;
  j["sgdf"]["B"] = c.sgdf.chains;
  j["sgdf"]["mode"] = to_string(c.sgdf.mode);
  j["sgdf"]["seed"] = c.sgdf.seed;
  j["sgdf"]["hidden"] = c.sgdf.hidden;
  j["cl"]["temperature"] = c.cl.temperature;
  j["cl"]["h_dim"] = c.cl.h_dim;
  j["cl"]["similarity_detached"] = c.cl.similarity_detached;
  j["train"]["pretrain_epochs"] = c.train.pretrain_epochs;
  j["train"]["finetune_epochs"] = c.train.finetune_epochs;
  j["train"]["batch_size"] = c.train.batch_size;
  j["train"]["learning_rate"] = c.train.learning_rate;
  j["train"]["beta1"] = c.train.beta1;
  j["train"]["beta2"] = c.train.beta2;
  j["train"]["epsilon"] = c.train.epsilon;
  j["train"]["log_acc_every"] = c.train.log_acc_every;
  j["eval"]["representation"] = to_string(c.eval.representation);
  j["eval"]["kmeans_restarts"] = c.eval.kmeans_restarts;
  return j;
}

}  // namespace gdcn
