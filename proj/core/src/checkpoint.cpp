#include "uniflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "uniflow/config.hpp"
#include "uniflow/error.hpp"

namespace uniflow::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using config::json;

void save(const model::ModelState& state, const std::filesystem::path& path) {
  json manifest = json::array();
  std::size_t offset = 0;
  for (const auto& p : state.params) {
    manifest.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}, {"offset", offset}});
    offset += static_cast<std::size_t>(p.value.size());
  }
  const json header = {{"format", 1},
                       {"patch", config::to_json(state.patch)},
                       {"model", config::to_json(state.config)},
                       {"task", config::to_json(state.task)},
                       {"trained_on", state.trained_on},
                       {"params", manifest},
                       {"blob_floats", offset}};
  const std::string text = header.dump();

  std::vector<float> blob;
  blob.reserve(offset);
  for (const auto& p : state.params)
    for (ad::Index i = 0; i < p.value.size(); ++i) blob.push_back(static_cast<float>(p.value.data()[i]));

  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io_error, "cannot write " + path.string());
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
  require(static_cast<bool>(out), ErrorCode::io_error, "short write to " + path.string());
}

model::ModelState load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io_error, "cannot open " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  require(static_cast<bool>(in) && std::memcmp(magic, kMagic, sizeof magic) == 0, ErrorCode::parse_error,
          path.string() + " is not a checkpoint");
  require(len < (1ULL << 31), ErrorCode::parse_error, "checkpoint header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  require(static_cast<bool>(in), ErrorCode::parse_error, "truncated checkpoint header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse_error, std::string("checkpoint header: ") + e.what());
  }
  config::check_keys(header, {"format", "patch", "model", "task", "trained_on", "params", "blob_floats"},
                     "checkpoint header");
  require(header.value("format", 0) == 1, ErrorCode::parse_error, "unsupported checkpoint format");

  model::ModelState st;
  st.patch = config::patch_from_json(header.at("patch"));
  st.config = config::model_from_json(header.at("model"));
  st.task = config::task_from_json(header.at("task"));
  st.trained_on = header.at("trained_on").get<std::vector<std::string>>();

  const auto total = header.at("blob_floats").get<std::size_t>();
  std::vector<float> blob(total);
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(total * sizeof(float)));
  require(static_cast<bool>(in), ErrorCode::parse_error, "truncated checkpoint blob");

  for (const auto& entry : header.at("params")) {
    const auto name = entry.at("name").get<std::string>();
    const auto rows = entry.at("shape").at(0).get<ad::Index>();
    const auto cols = entry.at("shape").at(1).get<ad::Index>();
    const auto off = entry.at("offset").get<std::size_t>();
    require(rows >= 0 && cols >= 0 && off + static_cast<std::size_t>(rows * cols) <= total, ErrorCode::parse_error,
            "parameter " + name + " lies outside the blob");
    ad::Matrix m(rows, cols);
    for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(blob[off + static_cast<std::size_t>(i)]);
    st.params.add(name, std::move(m));
  }
  st.index = model::resolve_params(st.params, st.config);
  return st;
}

}  // namespace uniflow::checkpoint
