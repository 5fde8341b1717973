#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "fluxtft/core/error.hpp"
#include "fluxtft/core/text.hpp"
#include "fluxtft/tft/model.hpp"

namespace fluxtft::tft {

/// Checkpoint directory layout.
struct CheckpointPaths {
  std::filesystem::path dir;
  std::filesystem::path params() const { return dir / "params.bin"; }
  std::filesystem::path manifest() const { return dir / "params.json"; }
  std::filesystem::path config() const { return dir / "config.json"; }
  std::filesystem::path stats() const { return dir / "norm_stats.json"; }
  std::filesystem::path catalog() const { return dir / "catalog.json"; }
};

inline void save_checkpoint(const TftModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const CheckpointPaths p{dir};
  model.params().save(p.params().string());
  text::write_file(p.manifest().string(), model.params().manifest().dump(2) + "\n");
  text::write_file(p.config().string(), model.config().to_json().dump(2) + "\n");
  model.stats().save(p.stats().string());
  model.catalog().save(p.catalog().string());
}

inline TftModel load_checkpoint(const std::filesystem::path& dir) {
  const CheckpointPaths p{dir};
  for (const auto& f : {p.params(), p.config(), p.stats(), p.catalog()}) {
    if (!std::filesystem::exists(f)) throw DataError("checkpoint: missing " + f.string());
  }
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(text::read_file(p.config().string()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: " + p.config().string() + ": " + e.what());
  }
  TftModel model(TftConfig::from_json(cfg), FeatureCatalog::load(p.catalog().string()),
                 NormStats::load(p.stats().string()));
  model.params().load(p.params().string());
  return model;
}

}  // namespace fluxtft::tft
