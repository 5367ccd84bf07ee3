#include "run_config.hpp"

#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "nes/error.hpp"
#include "nes/session.hpp"

namespace nes::cli {

namespace {

using json = nlohmann::json;

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "version", "corpus",         "clusters", "judgments", "doc_rankings", "index_dir", "features",
      "trainer", "strategies",     "prune_schedule", "seeds", "rounds", "class_name"};
  return keys;
}

std::filesystem::path existing_path(const json& j, const std::string& key,
                                    const std::filesystem::path& base) {
  if (!j.is_string()) throw ConfigError(fmt::format("config.{}: expected a path string", key));
  std::filesystem::path p = j.get<std::string>();
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::exists(p)) {
    throw ConfigError(fmt::format("config.{}: {} does not exist", key, p.string()));
  }
  return p;
}

template <typename T>
T typed(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("config.{}: wrong type", key));
  }
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("config: cannot open {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config: {} is not valid JSON: {}", path.string(), e.what()));
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  if (!j.contains("version")) throw ConfigError("config.version: missing");
  if (!j["version"].is_number_integer() || j["version"].get<int>() != kRunConfigVersion) {
    throw ConfigError(fmt::format("config.version: expected {}", kRunConfigVersion));
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
      throw ConfigError(fmt::format("config.{}: unknown field", key));
    }
  }

  const auto base = path.parent_path();
  RunConfig cfg;
  if (j.contains("corpus")) cfg.corpus = existing_path(j["corpus"], "corpus", base);
  if (j.contains("clusters")) cfg.clusters = existing_path(j["clusters"], "clusters", base);
  if (j.contains("judgments")) cfg.judgments = existing_path(j["judgments"], "judgments", base);
  if (j.contains("doc_rankings")) cfg.doc_rankings = existing_path(j["doc_rankings"], "doc_rankings", base);
  if (j.contains("index_dir")) {
    // The index directory may be an output; only its parent must exist.
    std::filesystem::path p = typed<std::string>(j["index_dir"], "index_dir");
    if (p.is_relative()) p = base / p;
    if (p.has_parent_path() && !std::filesystem::exists(p.parent_path())) {
      throw ConfigError(fmt::format("config.index_dir: parent of {} does not exist", p.string()));
    }
    cfg.index_dir = p;
  }
  if (j.contains("features")) {
    try {
      cfg.features = feature_config_from_json(j["features"]);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("config.features: {}", e.what()));
    }
  }
  if (j.contains("trainer")) {
    const auto& t = j["trainer"];
    if (!t.is_object()) throw ConfigError("config.trainer: expected an object");
    TrainerParams p;
    for (const auto& [key, value] : t.items()) {
      const auto field = "trainer." + key;
      if (key == "l2") {
        p.l2 = typed<double>(value, field);
        if (!(p.l2 > 0.0)) throw ConfigError("config.trainer.l2: must be > 0");
      } else if (key == "max_epochs") {
        p.max_epochs = typed<int>(value, field);
        if (p.max_epochs < 1) throw ConfigError("config.trainer.max_epochs: must be >= 1");
      } else if (key == "tolerance") {
        p.tolerance = typed<double>(value, field);
        if (!(p.tolerance > 0.0)) throw ConfigError("config.trainer.tolerance: must be > 0");
      } else if (key == "max_positive_weight") {
        p.max_positive_weight = typed<double>(value, field);
        if (!(p.max_positive_weight >= 1.0)) {
          throw ConfigError("config.trainer.max_positive_weight: must be >= 1");
        }
      } else {
        throw ConfigError(fmt::format("config.{}: unknown field", field));
      }
    }
    cfg.trainer = p;
  }
  if (j.contains("strategies")) {
    cfg.strategies = typed<std::vector<std::string>>(j["strategies"], "strategies");
    for (const auto& s : cfg.strategies) {
      if (!parse_strategy(s)) throw ConfigError(fmt::format("config.strategies: unknown strategy '{}'", s));
    }
  }
  if (j.contains("prune_schedule")) {
    cfg.prune_schedule = typed<std::vector<std::size_t>>(j["prune_schedule"], "prune_schedule");
    for (const auto q : cfg.prune_schedule) {
      if (q < 1) throw ConfigError("config.prune_schedule: sizes must be >= 1");
    }
  }
  if (j.contains("seeds")) cfg.seeds = typed<std::vector<std::uint64_t>>(j["seeds"], "seeds");
  if (j.contains("rounds")) {
    cfg.rounds = typed<std::size_t>(j["rounds"], "rounds");
    if (*cfg.rounds < 1) throw ConfigError("config.rounds: must be >= 1");
  }
  if (j.contains("class_name")) cfg.class_name = typed<std::string>(j["class_name"], "class_name");
  return cfg;
}

}  // namespace nes::cli
