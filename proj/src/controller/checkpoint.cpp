#include "morphctl/controller/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "morphctl/morphology/io.hpp"

namespace morphctl {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'M', 'O', 'R', 'P', 'H', 'C', 'T', 'L'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

json describe(const std::vector<NamedTensor>& tensors) {
  json out = json::array();
  for (const NamedTensor& t : tensors) out.push_back({{"name", t.name}, {"shape", t.value.shape()}});
  return out;
}

std::vector<NamedTensor> shapes_from(const json& j) {
  std::vector<NamedTensor> out;
  for (const json& e : j) {
    out.push_back({e.at("name").get<std::string>(),
                   Tensor(e.at("shape").get<std::vector<std::size_t>>())});
  }
  return out;
}

}  // namespace

Checkpoint make_checkpoint(const Controller& controller, const ContextNormalizer& normalizer,
                           std::uint64_t manifest_hash) {
  Checkpoint c;
  c.spec = controller.spec();
  c.normalizer = normalizer;
  c.manifest_hash = manifest_hash;
  for (const Parameter& p : controller.params()) c.params.push_back({p.name, p.value});
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  json header;
  header["spec"] = json::parse(spec_to_json(c.spec));
  header["normalizer"] = {{"mean", c.normalizer.mean}, {"std", c.normalizer.std}};
  header["manifest_hash"] = hex64(c.manifest_hash);
  header["params"] = describe(c.params);
  header["extra"] = describe(c.extra);
  header["metadata"] = json::parse(c.metadata);
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    const std::uint64_t len = text.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(len));
    for (const auto* group : {&c.params, &c.extra}) {
      for (const NamedTensor& t : *group) {
        out.write(reinterpret_cast<const char*>(t.value.data()),
                  static_cast<std::streamsize>(t.value.size() * sizeof(double)));
      }
    }
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint file");
  }
  if (version != kVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version));
  }
  if (len > (std::uint64_t{1} << 30)) throw CheckpointError(path.string() + ": corrupt header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError(path.string() + ": truncated header");

  Checkpoint c;
  try {
    const json header = json::parse(text);
    c.spec = spec_from_json(header.at("spec").dump());
    c.normalizer.mean = header.at("normalizer").at("mean").get<std::array<double, kContextDim>>();
    c.normalizer.std = header.at("normalizer").at("std").get<std::array<double, kContextDim>>();
    c.manifest_hash = std::stoull(header.at("manifest_hash").get<std::string>(), nullptr, 16);
    c.params = shapes_from(header.at("params"));
    c.extra = shapes_from(header.at("extra"));
    c.metadata = header.at("metadata").dump();
  } catch (const std::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
  for (auto* group : {&c.params, &c.extra}) {
    for (NamedTensor& t : *group) {
      in.read(reinterpret_cast<char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(double)));
      if (!in) throw CheckpointError(path.string() + ": truncated data at tensor " + t.name);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError(path.string() + ": trailing bytes after tensor data");
  }
  return c;
}

void restore_parameters(Controller& controller, const Checkpoint& c) {
  if (!(c.spec == controller.spec())) {
    throw CheckpointError("checkpoint spec " + spec_to_json(c.spec) +
                          " does not match controller spec " + spec_to_json(controller.spec()));
  }
  ParamStore& store = controller.params();
  if (c.params.size() != store.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(c.params.size()) +
                          " parameters, controller has " + std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    const NamedTensor& t = c.params[i];
    Parameter& p = store[i];
    if (t.name != p.name || t.value.shape() != p.value.shape()) {
      throw CheckpointError("checkpoint parameter " + t.name + " " +
                            shape_string(t.value.shape()) + " does not match " + p.name + " " +
                            shape_string(p.value.shape()));
    }
  }
  for (std::size_t i = 0; i < c.params.size(); ++i) store[i].value = c.params[i].value;
}

Controller controller_from_checkpoint(const Checkpoint& c) {
  Controller controller(c.spec, 0);
  restore_parameters(controller, c);
  return controller;
}

}  // namespace morphctl
