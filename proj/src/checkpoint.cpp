#include "ctpnet/checkpoint.hpp"

#include <fstream>

#include "ctpnet/errors.hpp"
#include "ctpnet/tensor_io.hpp"

namespace ctpnet {

namespace {
constexpr char kMagic[8] = {'C', 'T', 'P', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CTPNetModel& model, const NormStats& norm,
                     const std::vector<std::string>& channel_names, const nlohmann::json& meta) {
  const auto params = model.parameters();
  nlohmann::json header;
  header["config"] = model.config();
  header["norm"] = {{"mean", norm.mean}, {"std", norm.std}};
  header["channel_names"] = channel_names;
  header["meta"] = meta;
  auto& table = header["params"] = nlohmann::json::array();
  for (const auto& p : params) table.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kFormatVersion);
  write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) write_tensor(os, p.tensor);
  if (!os) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || !std::equal(magic, magic + 8, kMagic)) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  if (read_u32(is) != kFormatVersion) throw IoError("unsupported checkpoint version");
  std::string text(read_u32(is), '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(text.size()))) throw IoError("truncated checkpoint header");
  const auto header = nlohmann::json::parse(text);

  Checkpoint ck{CTPNetModel(header.at("config").get<CTPNetConfig>(), 0),
                NormStats{header.at("norm").at("mean").get<std::vector<double>>(),
                          header.at("norm").at("std").get<std::vector<double>>()},
                header.at("channel_names").get<std::vector<std::string>>(), header.at("meta")};
  auto params = ck.model.parameters();
  const auto& table = header.at("params");
  if (table.size() != params.size()) throw IoError("checkpoint parameter count does not match its config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor t = read_tensor(is);
    if (table[i].at("name").get<std::string>() != params[i].name || t.shape() != params[i].tensor.shape()) {
      throw IoError("checkpoint parameter '" + params[i].name + "' does not match the model layout");
    }
    const auto src = t.data();
    std::copy(src.begin(), src.end(), params[i].tensor.mutable_data().begin());
  }
  return ck;
}

}  // namespace ctpnet
