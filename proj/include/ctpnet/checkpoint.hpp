#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctpnet/model.hpp"
#include "ctpnet/series.hpp"

namespace ctpnet {

/// Layout: "CTPNCKPT", u32 format version, u32 header length, JSON header
/// (config, dataset normalization, parameter table, free-form meta), then one
/// tensor dump per parameter in header order.
struct Checkpoint {
  CTPNetModel model;
  NormStats norm;
  std::vector<std::string> channel_names;
  nlohmann::json meta;
};

void save_checkpoint(const std::filesystem::path& path, const CTPNetModel& model, const NormStats& norm,
                     const std::vector<std::string>& channel_names, const nlohmann::json& meta = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ctpnet
