#include "xmadapt/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "xmadapt/error.hpp"

namespace xmadapt {

namespace {

using nlohmann::json;

int64_t get_int(const json& j, const char* key, int64_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer())
    throw ConfigError(std::string("config key '") + key + "' must be an integer");
  return v.get<int64_t>();
}

uint64_t get_uint(const json& j, const char* key, uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<int64_t>() < 0))
    throw ConfigError(std::string("config key '") + key + "' must be a nonnegative integer");
  return v.get<uint64_t>();
}

double get_num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(std::string("config key '") + key + "' must be a number");
  return v.get<double>();
}

std::string get_str(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(std::string("config key '") + key + "' must be a string");
  return v.get<std::string>();
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "image_size", "patch_size", "embed_dim",  "depth",      "adapter_depth", "heads",
      "mlp_ratio",  "variant",    "lambda_dice", "lambda_ce", "lr",            "batch_size",
      "epochs",     "seed",       "data_dir",   "out_dir"};
  return keys;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& item : j.items()) {
    if (!known_keys().count(item.key()))
      throw ConfigError("unknown config key '" + item.key() + "'");
  }

  RunConfig c;
  c.image_size = get_int(j, "image_size", c.image_size);
  c.patch_size = get_int(j, "patch_size", c.patch_size);
  c.embed_dim = get_int(j, "embed_dim", c.embed_dim);
  c.depth = get_int(j, "depth", c.depth);
  c.adapter_depth = get_int(j, "adapter_depth", c.adapter_depth);
  c.heads = get_int(j, "heads", c.heads);
  c.mlp_ratio = get_num(j, "mlp_ratio", c.mlp_ratio);
  c.variant = get_str(j, "variant", c.variant);
  c.lambda_dice = get_num(j, "lambda_dice", c.lambda_dice);
  c.lambda_ce = get_num(j, "lambda_ce", c.lambda_ce);
  c.lr = get_num(j, "lr", c.lr);
  c.batch_size = get_int(j, "batch_size", c.batch_size);
  c.epochs = get_int(j, "epochs", c.epochs);
  c.seed = get_uint(j, "seed", c.seed);
  c.data_dir = get_str(j, "data_dir", c.data_dir);
  c.out_dir = get_str(j, "out_dir", c.out_dir);
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in) throw IoError("failed reading '" + path + "'");
  return parse(ss.str());
}

std::string RunConfig::to_json() const {
  json j;
  j["image_size"] = image_size;
  j["patch_size"] = patch_size;
  j["embed_dim"] = embed_dim;
  j["depth"] = depth;
  j["adapter_depth"] = adapter_depth;
  j["heads"] = heads;
  j["mlp_ratio"] = mlp_ratio;
  j["variant"] = variant;
  j["lambda_dice"] = lambda_dice;
  j["lambda_ce"] = lambda_ce;
  j["lr"] = lr;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["data_dir"] = data_dir;
  j["out_dir"] = out_dir;
  return j.dump(2) + "\n";
}

void RunConfig::validate() const {
  model_config().validate();
  train_config().loss.validate();
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.backbone.image_size = image_size;
  m.backbone.patch_size = patch_size;
  m.backbone.embed_dim = embed_dim;
  m.backbone.depth = depth;
  m.backbone.heads = heads;
  m.backbone.mlp_ratio = static_cast<float>(mlp_ratio);
  m.adapter_depth = adapter_depth;
  m.variant = ModelVariant::parse(variant);
  m.seed = seed;
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.seed = seed;
  t.loss.lambda_dice = static_cast<float>(lambda_dice);
  t.loss.lambda_ce = static_cast<float>(lambda_ce);
  return t;
}

AdamWConfig RunConfig::adamw_config() const {
  AdamWConfig a;
  a.lr = static_cast<float>(lr);
  return a;
}

}  // namespace xmadapt
