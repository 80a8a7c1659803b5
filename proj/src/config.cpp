#include "afdcd/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace afdcd {

namespace {

const std::set<std::string>& known_terms() {
  static const std::set<std::string> terms{"task", "kd", "fd", "afdcd"};
  return terms;
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void read_size(const nlohmann::json& j, const char* key, std::size_t& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
  }
  out = v.get<std::size_t>();
}

}  // namespace

AfdcdVariant parse_variant(std::string_view name) {
  if (name == "sc") return AfdcdVariant::Spatial;
  if (name == "cc") return AfdcdVariant::Channel;
  if (name == "oc") return AfdcdVariant::Omni;
  throw ConfigError("afdcd_variant must be sc, cc or oc");
}

std::string to_string(AfdcdVariant v) {
  switch (v) {
    case AfdcdVariant::Spatial: return "sc";
    case AfdcdVariant::Channel: return "cc";
    case AfdcdVariant::Omni: return "oc";
  }
  return "oc";
}

bool RunConfig::has_term(std::string_view term) const {
  return std::find(loss_terms.begin(), loss_terms.end(), term) != loss_terms.end();
}

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> keys{
      "image_size", "num_classes", "train_count", "val_count", "noise_std",
      "teacher_layers", "teacher_channels", "student_layers", "student_channels",
      "tau", "channel_groups", "patch_side", "pool_factor", "distance",
      "include_positive_in_denominator", "pool_coupling",
      "lambda1", "lambda2", "lambda3", "kd_temperature", "mask_ratio", "mask_mode",
      "loss_terms", "afdcd_variant", "lr", "momentum", "iterations", "teacher_iterations",
      "batch_size", "seed", "out_dir", "stats_images", "selfsim_window"};
  for (const auto& item : j.items()) {
    if (!keys.contains(item.key())) throw ConfigError("unknown config key '" + item.key() + "'");
  }

  RunConfig c;
  read_size(j, "image_size", c.dataset.image_size);
  read_size(j, "num_classes", c.dataset.num_classes);
  read_size(j, "train_count", c.dataset.train_count);
  read_size(j, "val_count", c.dataset.val_count);
  read(j, "noise_std", c.dataset.noise_std);
  read_size(j, "teacher_layers", c.teacher.layers);
  read_size(j, "teacher_channels", c.teacher.channels);
  read_size(j, "student_layers", c.student.layers);
  read_size(j, "student_channels", c.student.channels);
  read(j, "tau", c.contrast.tau);
  read_size(j, "channel_groups", c.contrast.groups);
  read_size(j, "patch_side", c.contrast.patch_side);
  read_size(j, "pool_factor", c.contrast.pool_factor);
  if (j.contains("distance")) {
    std::string d;
    read(j, "distance", d);
    try {
      c.contrast.distance = parse_distance_kind(d);
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
  }
  read(j, "include_positive_in_denominator", c.contrast.include_positive_in_denominator);
  if (j.contains("pool_coupling")) {
    std::string s;
    read(j, "pool_coupling", s);
    if (s == "independent") c.contrast.pool_coupling = PoolCoupling::Independent;
    else if (s == "student-indices") c.contrast.pool_coupling = PoolCoupling::StudentIndices;
    else throw ConfigError("pool_coupling must be independent or student-indices");
  }
  read(j, "lambda1", c.weights.lambda1);
  read(j, "lambda2", c.weights.lambda2);
  read(j, "lambda3", c.weights.lambda3);
  read(j, "kd_temperature", c.kd_temperature);
  read(j, "mask_ratio", c.mask_ratio);
  if (j.contains("mask_mode")) {
    std::string s;
    read(j, "mask_mode", s);
    if (s == "bernoulli") c.mask_mode = MaskMode::Bernoulli;
    else if (s == "exact") c.mask_mode = MaskMode::ExactCount;
    else throw ConfigError("mask_mode must be bernoulli or exact");
  }
  read(j, "loss_terms", c.loss_terms);
  if (j.contains("afdcd_variant")) {
    std::string s;
    read(j, "afdcd_variant", s);
    c.afdcd_variant = parse_variant(s);
  }
  read(j, "lr", c.lr);
  read(j, "momentum", c.momentum);
  read_size(j, "iterations", c.iterations);
  read_size(j, "teacher_iterations", c.teacher_iterations);
  read_size(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
  read(j, "out_dir", c.out_dir);
  read_size(j, "stats_images", c.stats_images);
  read_size(j, "selfsim_window", c.selfsim_window);
  c.dataset.seed = c.seed;
  validate(c);
  return c;
}

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["image_size"] = c.dataset.image_size;
  j["num_classes"] = c.dataset.num_classes;
  j["train_count"] = c.dataset.train_count;
  j["val_count"] = c.dataset.val_count;
  j["noise_std"] = c.dataset.noise_std;
  j["teacher_layers"] = c.teacher.layers;
  j["teacher_channels"] = c.teacher.channels;
  j["student_layers"] = c.student.layers;
  j["student_channels"] = c.student.channels;
  j["tau"] = c.contrast.tau;
  j["channel_groups"] = c.contrast.groups;
  j["patch_side"] = c.contrast.patch_side;
  j["pool_factor"] = c.contrast.pool_factor;
  j["distance"] = to_string(c.contrast.distance);
  j["include_positive_in_denominator"] = c.contrast.include_positive_in_denominator;
  j["pool_coupling"] =
      c.contrast.pool_coupling == PoolCoupling::Independent ? "independent" : "student-indices";
  j["lambda1"] = c.weights.lambda1;
  j["lambda2"] = c.weights.lambda2;
  j["lambda3"] = c.weights.lambda3;
  j["kd_temperature"] = c.kd_temperature;
  j["mask_ratio"] = c.mask_ratio;
  j["mask_mode"] = c.mask_mode == MaskMode::Bernoulli ? "bernoulli" : "exact";
  j["loss_terms"] = c.loss_terms;
  j["afdcd_variant"] = to_string(c.afdcd_variant);
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["iterations"] = c.iterations;
  j["teacher_iterations"] = c.teacher_iterations;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["stats_images"] = c.stats_images;
  j["selfsim_window"] = c.selfsim_window;
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  const auto& d = c.dataset;
  if (d.num_classes < 2 || d.num_classes > 255) fail("num_classes must be in [2, 255]");
  if (d.image_size < 8) fail("image_size must be at least 8");
  if (d.train_count == 0 || d.val_count == 0) fail("train_count and val_count must be positive");
  if (!(d.noise_std >= 0.0)) fail("noise_std must be non-negative");
  if (c.teacher.layers == 0 || c.student.layers == 0) fail("models need at least one layer");
  if (c.teacher.channels == 0 || c.student.channels == 0) fail("models need at least one channel");
  if (c.teacher.channels < c.student.channels) fail("teacher_channels must be >= student_channels");

  if (c.loss_terms.empty()) fail("loss_terms must not be empty");
  std::set<std::string> seen;
  for (const auto& t : c.loss_terms) {
    if (!known_terms().contains(t)) fail("unknown loss term '" + t + "'");
    if (!seen.insert(t).second) fail("duplicate loss term '" + t + "'");
  }
  if (!(c.weights.lambda1 >= 0.0 && c.weights.lambda2 >= 0.0 && c.weights.lambda3 >= 0.0)) {
    fail("lambda1/2/3 must be non-negative");
  }
  if (!(c.kd_temperature > 0.0)) fail("kd_temperature must be positive");
  if (!(c.mask_ratio >= 0.0 && c.mask_ratio < 1.0)) fail("mask_ratio must lie in [0, 1)");
  if (!(c.lr > 0.0)) fail("lr must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (c.batch_size == 0) fail("batch_size must be positive");

  const auto& cc = c.contrast;
  if (!(cc.tau > 0.0)) fail("tau must be positive");
  const std::size_t ct = c.teacher.channels;
  if (cc.groups == 0 || ct % cc.groups != 0) fail("channel_groups must divide teacher_channels");
  if (c.has_term("afdcd")) {
    switch (c.afdcd_variant) {
      case AfdcdVariant::Omni: {
        if (cc.pool_factor == 0 || d.image_size % cc.pool_factor != 0) fail("pool_factor must divide image_size");
        const std::size_t pooled = d.image_size / cc.pool_factor;
        if (cc.patch_side == 0 || pooled % cc.patch_side != 0) fail("patch_side must divide image_size / pool_factor");
        if (cc.patch_side * cc.patch_side * cc.groups < 2) fail("patch_side^2 * channel_groups must be at least 2");
        break;
      }
      case AfdcdVariant::Channel:
        if (cc.groups < 2) fail("channel contrasting needs channel_groups >= 2");
        break;
      case AfdcdVariant::Spatial:
        break;
    }
  }
  if (c.stats_images == 0 || c.stats_images > d.val_count) fail("stats_images must be in [1, val_count]");
  if (c.selfsim_window == 0 || d.image_size % c.selfsim_window != 0) fail("selfsim_window must divide image_size");
}

}  // namespace afdcd
