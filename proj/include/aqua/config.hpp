#pragma once

// Run configuration as a flat JSON object of dotted keys, e.g.
//   {"renderer.type": "single_surface", "renderer.eta": 0.5, "train.batch": 4096}
// Files are merged over the defaults, command-line flags over the file.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "aqua/error.hpp"
#include "aqua/json_util.hpp"
#include "aqua/trainer.hpp"

namespace aqua {

class RunConfig {
 public:
  RunConfig() : values_(defaults()) {}

  static Json defaults() {
    const TrainConfig t;
    return Json{
        {"seed", 0},
        {"threads", 0},
        {"renderer.type", std::string(to_string(t.renderer.kind))},
        {"renderer.eta", t.renderer.eta},
        {"renderer.base", t.renderer.base},
        {"renderer.normalize_weights", t.renderer.normalize_weights},
        {"robust.enabled", t.robust.enabled},
        {"robust.t_r", t.robust.t_r},
        {"robust.quantile", t.robust.quantile},
        {"dgs.enabled", t.dgs.enabled},
        {"dgs.t_h", t.dgs.threshold},
        {"optim.lr", t.optim.lr},
        {"optim.beta1", t.optim.beta1},
        {"optim.beta2", t.optim.beta2},
        {"optim.eps", t.optim.eps},
        {"early_stop.interval", t.early_stop_interval},
        {"train.batch", t.batch},
        {"train.iterations", t.iterations},
        {"train.log_every", t.log_every},
        {"sampling.coarse", t.sampling.coarse},
        {"sampling.fine", t.sampling.fine},
        {"sampling.near", t.sampling.near},
        {"sampling.far", t.sampling.far},
        {"field.resolution", {t.grid.nx, t.grid.ny, t.grid.nz}},
        {"field.bounds_min", json_util::to_json(t.bounds.lo)},
        {"field.bounds_max", json_util::to_json(t.bounds.hi)},
        {"field.medium_color", json_util::to_json(t.medium_color)},
        {"field.initial_density", t.initial_density},
        {"checkpoint.format", "binary"},
    };
  }

  /// Sets one key, checking it exists and the value has the default's type.
  void set(const std::string& key, const Json& value, const std::string& origin = "") {
    const std::string path = origin + "/" + key;
    auto it = values_.find(key);
    if (it == values_.end()) throw SchemaError(path, "unknown configuration key");
    const Json& current = *it;
    auto fail = [&](const char* want) { throw SchemaError(path, std::string("expected ") + want); };
    if (current.is_boolean()) {
      if (!value.is_boolean()) fail("a boolean");
    } else if (current.is_number_integer()) {
      if (!value.is_number_integer()) fail("an integer");
    } else if (current.is_number()) {
      if (!value.is_number()) fail("a number");
    } else if (current.is_string()) {
      if (!value.is_string()) fail("a string");
    } else if (current.is_array()) {
      if (!value.is_array() || value.size() != current.size()) fail("an array of 3");
      for (const auto& e : value)
        if (!e.is_number()) fail("an array of 3 numbers");
    }
    *it = value;
  }

  void merge(const Json& j, const std::string& origin = "") {
    if (!j.is_object()) throw SchemaError(origin.empty() ? "/" : origin, "configuration must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) set(it.key(), it.value(), origin);
  }

  void merge_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingInput("config file not found: '" + path.string() + "'");
    std::ifstream is(path);
    Json j;
    try {
      j = Json::parse(is);
    } catch (const Json::exception& e) {
      throw InvalidArgument("config '" + path.string() + "': " + e.what());
    }
    merge(j, path.string() + ":");
  }

  const Json& get(const std::string& key) const { return values_.at(key); }
  const Json& resolved() const { return values_; }

  TrainConfig train_config() const {
    using json_util::vec3;
    TrainConfig t;
    const auto num = [&](const char* k) { return values_.at(k).get<double>(); };
    const auto integer = [&](const char* k) { return values_.at(k).get<long long>(); };
    const auto flag = [&](const char* k) { return values_.at(k).get<bool>(); };
    try {
      t.renderer.kind = renderer_from_string(values_.at("renderer.type").get<std::string>());
    } catch (const InvalidArgument& e) {
      throw SchemaError("/renderer.type", e.what());
    }
    t.renderer.eta = num("renderer.eta");
    t.renderer.base = num("renderer.base");
    t.renderer.normalize_weights = flag("renderer.normalize_weights");
    t.robust.enabled = flag("robust.enabled");
    t.robust.t_r = num("robust.t_r");
    t.robust.quantile = num("robust.quantile");
    t.dgs.enabled = flag("dgs.enabled");
    t.dgs.threshold = num("dgs.t_h");
    t.optim = {num("optim.lr"), num("optim.beta1"), num("optim.beta2"), num("optim.eps")};
    t.early_stop_interval = static_cast<int>(integer("early_stop.interval"));
    const long long batch = integer("train.batch");
    if (batch <= 0) throw SchemaError("/train.batch", "must be positive");
    t.batch = static_cast<std::size_t>(batch);
    t.iterations = static_cast<int>(integer("train.iterations"));
    t.log_every = static_cast<int>(integer("train.log_every"));
    const long long coarse = integer("sampling.coarse"), fine = integer("sampling.fine");
    if (coarse < 2) throw SchemaError("/sampling.coarse", "must be at least 2");
    if (fine < 0) throw SchemaError("/sampling.fine", "must be non-negative");
    t.sampling = {static_cast<std::size_t>(coarse), static_cast<std::size_t>(fine), num("sampling.near"),
                  num("sampling.far")};
    const Json& res = values_.at("field.resolution");
    for (const auto& r : res)
      if (!r.is_number_integer()) throw SchemaError("/field.resolution", "expected integers");
    t.grid = {res[0].get<int>(), res[1].get<int>(), res[2].get<int>()};
    t.bounds = {vec3(values_.at("field.bounds_min"), "/field.bounds_min"),
                vec3(values_.at("field.bounds_max"), "/field.bounds_max")};
    t.medium_color = vec3(values_.at("field.medium_color"), "/field.medium_color");
    t.initial_density = num("field.initial_density");
    t.seed = static_cast<std::uint64_t>(integer("seed"));
    t.threads = static_cast<int>(integer("threads"));
    const std::string fmt = values_.at("checkpoint.format").get<std::string>();
    if (fmt != "binary" && fmt != "json") throw SchemaError("/checkpoint.format", "expected 'binary' or 'json'");
    t.validate();
    return t;
  }

 private:
  Json values_;
};

}  // namespace aqua
