#include "memessl/config.hpp"

#include <algorithm>
#include <set>

#include "memessl/util.hpp"

namespace memessl {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<ModelSpec> PipelineConfig::default_models() {
  ModelSpec m1;
  m1.name = "model_1";
  m1.train.total_steps = 3000;
  m1.train.schedule = Schedule::warmup_linear;
  m1.train.warmup_steps = 2000;
  m1.train.batch_size = 32;
  m1.train.base_lr = 5e-5;
  m1.train.backbone_lr_ratio = 0.3;
  ModelSpec m2 = m1;
  m2.name = "model_2";
  m2.train.total_steps = 3500;
  m2.train.schedule = Schedule::warmup_cosine;
  m2.train.warmup_steps = 500;
  m2.train.batch_size = 80;
  m2.train.backbone_lr_ratio = 0.6;
  return {m1, m2};
}

namespace {

// Field reader that tracks which keys were consumed.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw Error(where_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(where_ + "." + key + ": wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw Error(where_ + ": unknown key '" + it.key() + "'");
  }

  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void from_json_at(const json& j, FusionConfig& c, const std::string& where) {
  Fields f(j, where);
  f.get("vocab_size", c.vocab_size);
  f.get("max_text_len", c.max_text_len);
  f.get("regions", c.regions);
  f.get("region_dim", c.region_dim);
  f.get("d_model", c.d_model);
  f.get("n_heads", c.n_heads);
  f.get("n_layers", c.n_layers);
  f.get("d_ff", c.d_ff);
  f.get("dropout_rate", c.dropout_rate);
  f.get("n_classes", c.n_classes);
  std::string modality(to_string(c.modality));
  f.get("modality", modality);
  c.modality = parse_modality(modality);
  f.finish();
}

void from_json_at(const json& j, TrainConfig& c, const std::string& where) {
  Fields f(j, where);
  f.get("total_steps", c.total_steps);
  std::string schedule(to_string(c.schedule));
  f.get("schedule", schedule);
  c.schedule = parse_schedule(schedule);
  f.get("warmup_steps", c.warmup_steps);
  f.get("batch_size", c.batch_size);
  f.get("base_lr", c.base_lr);
  f.get("backbone_lr_ratio", c.backbone_lr_ratio);
  f.get("dropout_rate", c.dropout_rate);
  f.get("seed", c.seed);
  f.get("eval_every", c.eval_every);
  f.finish();
}

template <typename Arr>
void get_mix(Fields& f, const char* key, Arr& mix) {
  const json* m = f.sub(key);
  if (!m) return;
  if (!m->is_object()) throw Error(f.where() + "." + key + ": expected an object keyed by category");
  for (auto it = m->begin(); it != m->end(); ++it) {
    auto cat = parse_category(it.key());
    if (!cat) throw Error(f.where() + "." + key + ": unknown category '" + it.key() + "'");
    if (!it->is_number()) throw Error(f.where() + "." + key + "." + it.key() + ": wrong type");
    mix[static_cast<std::size_t>(*cat)] = it->get<double>();
  }
}

void from_json_at(const json& j, SynthSpec& s, const std::string& where) {
  Fields f(j, where);
  f.get("n_train", s.n_train);
  f.get("n_dev", s.n_dev);
  f.get("n_test", s.n_test);
  f.get("n_dev_remainder", s.n_dev_remainder);
  f.get("n_manual", s.n_manual);
  f.get("n_pool", s.n_pool);
  f.get("n_pool_irregular_text", s.n_pool_irregular_text);
  f.get("n_pool_irregular_size", s.n_pool_irregular_size);
  get_mix(f, "mix", s.mix);
  get_mix(f, "pool_mix", s.pool_mix);
  f.get("image_height", s.image_height);
  f.get("image_width", s.image_width);
  f.get("vocab_size", s.vocab_size);
  f.get("text_len", s.text_len);
  f.get("n_concepts", s.n_concepts);
  f.get("noise", s.noise);
  f.get("seed", s.seed);
  f.finish();
}

void from_json_at(const json& j, FeatureConfig& c, const std::string& where) {
  Fields f(j, where);
  f.get("image_height", c.image_height);
  f.get("image_width", c.image_width);
  f.get("grid_rows", c.grid_rows);
  f.get("grid_cols", c.grid_cols);
  f.get("dim", c.dim);
  f.finish();
}

void from_json_at(const json& j, Thresholds& t, const std::string& where) {
  Fields f(j, where);
  f.get("tau_pos", t.tau_pos);
  f.get("tau_neg", t.tau_neg);
  f.finish();
}

ordered_json mix_json(const std::array<double, kNumCategories>& mix) {
  ordered_json j;
  for (std::size_t i = 0; i < kNumCategories; ++i) j[std::string(to_string(static_cast<Category>(i)))] = mix[i];
  return j;
}

}  // namespace

ordered_json to_json(const FusionConfig& c) {
  return ordered_json{{"vocab_size", c.vocab_size}, {"max_text_len", c.max_text_len}, {"regions", c.regions},
                      {"region_dim", c.region_dim}, {"d_model", c.d_model},           {"n_heads", c.n_heads},
                      {"n_layers", c.n_layers},     {"d_ff", c.d_ff},                 {"dropout_rate", c.dropout_rate},
                      {"n_classes", c.n_classes},   {"modality", std::string(to_string(c.modality))}};
}

ordered_json to_json(const TrainConfig& c) {
  return ordered_json{{"total_steps", c.total_steps},
                      {"schedule", std::string(to_string(c.schedule))},
                      {"warmup_steps", c.warmup_steps},
                      {"batch_size", c.batch_size},
                      {"base_lr", c.base_lr},
                      {"backbone_lr_ratio", c.backbone_lr_ratio},
                      {"dropout_rate", c.dropout_rate},
                      {"seed", c.seed},
                      {"eval_every", c.eval_every}};
}

ordered_json to_json(const SynthSpec& s) {
  return ordered_json{{"n_train", s.n_train},
                      {"n_dev", s.n_dev},
                      {"n_test", s.n_test},
                      {"n_dev_remainder", s.n_dev_remainder},
                      {"n_manual", s.n_manual},
                      {"n_pool", s.n_pool},
                      {"n_pool_irregular_text", s.n_pool_irregular_text},
                      {"n_pool_irregular_size", s.n_pool_irregular_size},
                      {"mix", mix_json(s.mix)},
                      {"pool_mix", mix_json(s.pool_mix)},
                      {"image_height", s.image_height},
                      {"image_width", s.image_width},
                      {"vocab_size", s.vocab_size},
                      {"text_len", s.text_len},
                      {"n_concepts", s.n_concepts},
                      {"noise", s.noise},
                      {"seed", s.seed}};
}

ordered_json to_json(const FeatureConfig& c) {
  return ordered_json{{"image_height", c.image_height},
                      {"image_width", c.image_width},
                      {"grid_rows", c.grid_rows},
                      {"grid_cols", c.grid_cols},
                      {"dim", c.dim}};
}

ordered_json to_json(const Thresholds& t) { return ordered_json{{"tau_pos", t.tau_pos}, {"tau_neg", t.tau_neg}}; }

ordered_json to_json(const PipelineConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["synth"] = to_json(c.synth);
  j["features"] = to_json(c.features);
  j["pseudo"] = to_json(c.thresholds);
  j["augment"] = ordered_json{{"cutout_frac", c.cutout_frac}, {"cutout_fill", c.cutout_fill}};
  for (const auto& m : c.models) j[m.name] = ordered_json{{"fusion", to_json(m.fusion)}, {"train", to_json(m.train)}};
  return j;
}

void from_json(const json& j, FusionConfig& out) { from_json_at(j, out, "fusion"); }
void from_json(const json& j, TrainConfig& out) { from_json_at(j, out, "train"); }
void from_json(const json& j, SynthSpec& out) { from_json_at(j, out, "synth"); }
void from_json(const json& j, FeatureConfig& out) { from_json_at(j, out, "features"); }
void from_json(const json& j, Thresholds& out) { from_json_at(j, out, "pseudo"); }

void from_json(const json& j, PipelineConfig& out) {
  if (!j.is_object()) throw Error("config: expected a JSON object");
  std::vector<ModelSpec> models = out.models;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    if (key == "seed") {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw Error("config.seed: expected a non-negative integer");
      out.seed = v.get<std::uint64_t>();
    } else if (key == "synth") {
      from_json_at(v, out.synth, "config.synth");
    } else if (key == "features") {
      from_json_at(v, out.features, "config.features");
    } else if (key == "pseudo") {
      from_json_at(v, out.thresholds, "config.pseudo");
    } else if (key == "augment") {
      Fields f(v, "config.augment");
      f.get("cutout_frac", out.cutout_frac);
      f.get("cutout_fill", out.cutout_fill);
      f.finish();
    } else if (key.rfind("model_", 0) == 0) {
      // Overlay onto the existing model of the same name, or add a new one.
      auto it = std::find_if(models.begin(), models.end(), [&](const ModelSpec& m) { return m.name == key; });
      if (it == models.end()) {
        ModelSpec fresh;
        fresh.name = key;
        models.push_back(fresh);
        it = models.end() - 1;
      }
      ModelSpec& m = *it;
      Fields f(v, "config." + key);
      if (const json* fu = f.sub("fusion")) from_json_at(*fu, m.fusion, "config." + key + ".fusion");
      if (const json* tr = f.sub("train")) from_json_at(*tr, m.train, "config." + key + ".train");
      f.finish();
    } else {
      throw Error("config: unknown key '" + key + "'");
    }
  }
  std::sort(models.begin(), models.end(), [](const ModelSpec& a, const ModelSpec& b) { return a.name < b.name; });
  out.models = std::move(models);
}

PipelineConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  PipelineConfig pc;
  from_json(j, pc);
  return pc;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(binio::read_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

ExperimentConfig experiment_config(const PipelineConfig& pc) {
  ExperimentConfig ec;
  ec.models = pc.models;
  ec.features = pc.features;
  ec.thresholds = pc.thresholds;
  ec.cutout_frac = pc.cutout_frac;
  ec.cutout_fill = pc.cutout_fill;
  ec.seed = pc.seed;
  return ec;
}

}  // namespace memessl
