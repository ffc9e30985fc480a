#include "ttvi/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "ttvi/errors.hpp"

namespace ttvi {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are little-endian");

nlohmann::json arch_to_json(const ArchConfig& arch) {
  return {{"volume", arch.volume},
          {"extractor_channels", arch.extractor_channels},
          {"pooled_stages", arch.pooled_stages},
          {"interp_channels", arch.interp_channels},
          {"mae_channels", arch.mae_channels},
          {"rotation_hidden", arch.rotation_hidden},
          {"trilinear_upsampling", arch.trilinear_upsampling}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.volume = j.at("volume").get<std::array<std::size_t, 3>>();
  a.extractor_channels = j.at("extractor_channels").get<std::vector<std::size_t>>();
  a.pooled_stages = j.at("pooled_stages").get<std::size_t>();
  a.interp_channels = j.at("interp_channels").get<std::vector<std::size_t>>();
  a.mae_channels = j.at("mae_channels").get<std::vector<std::size_t>>();
  a.rotation_hidden = j.at("rotation_hidden").get<std::size_t>();
  a.trilinear_upsampling = j.value("trilinear_upsampling", false);
  a.validate();
  return a;
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet<float>& params) {
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", params[i].name},
                       {"partition", partition_name(params[i].partition)},
                       {"shape", params[i].value.shape()},
                       {"dtype", "f32"}});
  }
  const nlohmann::json manifest{
      {"format", "ttvi-checkpoint"}, {"version", 1}, {"arch", arch_to_json(params.arch())}, {"tensors", tensors}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << manifest.dump() << '\n';
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = params.value(i);
    out.write(reinterpret_cast<const char*>(v.raw()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  if (!out) throw FormatError("short write to '" + path.string() + "'");
}

namespace {

std::string describe_mismatch(const ArchConfig& want, const ArchConfig& got) {
  const auto a = arch_to_json(want);
  const auto b = arch_to_json(got);
  for (const auto& [key, value] : a.items()) {
    if (b.at(key) != value) return key + ": expected " + value.dump() + ", checkpoint has " + b.at(key).dump();
  }
  return "unknown difference";
}

}  // namespace

ParamSet<float> load_checkpoint(const std::filesystem::path& path, const ArchConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("'" + path.string() + "': empty checkpoint");
  ArchConfig arch;
  std::vector<NamedTensor<float>> tensors;
  try {
    const auto manifest = nlohmann::json::parse(line);
    if (manifest.at("format") != "ttvi-checkpoint" || manifest.at("version") != 1) {
      throw FormatError("'" + path.string() + "': not a version-1 checkpoint");
    }
    arch = arch_from_json(manifest.at("arch"));
    for (const auto& t : manifest.at("tensors")) {
      if (t.at("dtype") != "f32") throw FormatError("'" + path.string() + "': dtype must be f32");
      tensors.push_back({t.at("name").get<std::string>(), parse_partition(t.at("partition").get<std::string>()),
                         Tensor<float>(t.at("shape").get<Shape>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "': bad manifest: " + e.what());
  }
  if (expected != nullptr && !(*expected == arch)) {
    throw FormatError("checkpoint '" + path.string() + "' architecture mismatch: " +
                        describe_mismatch(*expected, arch));
  }
  for (auto& t : tensors) {
    in.read(reinterpret_cast<char*>(t.value.raw()), static_cast<std::streamsize>(t.value.size() * sizeof(float)));
    if (!in) throw FormatError("'" + path.string() + "': payload truncated in tensor " + t.name);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("'" + path.string() + "': trailing bytes");
  ParamSet<float> params(arch, std::move(tensors));
  // The manifest must match what this build would create for the architecture.
  const auto reference = init_params<float>(arch, 0);
  if (reference.size() != params.size()) throw FormatError("'" + path.string() + "': wrong tensor count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (reference[i].name != params[i].name || reference[i].value.shape() != params[i].value.shape()) {
      throw FormatError("'" + path.string() + "': tensor " + std::to_string(i) + " is " + params[i].name +
                        to_string(params[i].value.shape()) + ", expected " + reference[i].name +
                        to_string(reference[i].value.shape()));
    }
  }
  return params;
}

std::uint64_t param_hash(const ParamSet<float>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    mix(params[i].name.data(), params[i].name.size());
    for (auto d : params[i].value.shape()) mix(&d, sizeof d);
    mix(params.value(i).raw(), params.value(i).size() * sizeof(float));
  }
  return h;
}

}  // namespace ttvi
