#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nes/features.hpp"
#include "nes/model.hpp"

namespace nes::cli {

inline constexpr int kRunConfigVersion = 1;

/// Versioned JSON config shared by all subcommands; flags override it.
struct RunConfig {
  std::optional<std::filesystem::path> corpus;
  std::optional<std::filesystem::path> clusters;
  std::optional<std::filesystem::path> judgments;
  std::optional<std::filesystem::path> doc_rankings;
  std::optional<std::filesystem::path> index_dir;
  std::optional<FeatureConfig> features;
  std::optional<TrainerParams> trainer;
  std::vector<std::string> strategies;
  std::vector<std::size_t> prune_schedule;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> rounds;
  std::optional<std::string> class_name;
};

/// Throws ConfigError naming the offending field ("config.rounds", ...).
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace nes::cli
