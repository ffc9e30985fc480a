#include <bit>
#include <fstream>

#include <json.hpp>

#include "ttvi/errors.hpp"
#include "ttvi/synth.hpp"

namespace ttvi::synth {

static_assert(std::endian::native == std::endian::little, "volume files are little-endian");

void write_volume(const std::filesystem::path& path, const Volume& volume) {
  if (volume.rank() != 3) throw ShapeError("write_volume: expected [D,H,W], got " + to_string(volume.shape()));
  nlohmann::json header{{"shape", volume.shape()}, {"dtype", "f32"}, {"order", "row-major"}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(volume.raw()), static_cast<std::streamsize>(volume.size() * sizeof(float)));
  if (!out) throw FormatError("short write to '" + path.string() + "'");
}

Volume read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("'" + path.string() + "': missing header line");
  Shape shape;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("dtype").get<std::string>() != "f32") throw FormatError("'" + path.string() + "': dtype must be f32");
    shape = header.at("shape").get<Shape>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "': bad header: " + e.what());
  }
  if (shape.size() != 3) throw FormatError("'" + path.string() + "': expected a rank-3 shape, got " + to_string(shape));
  const auto payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto actual = static_cast<std::size_t>(in.tellg() - payload_start);
  const std::size_t expected = numel(shape) * sizeof(float);
  if (actual != expected) {
    throw FormatError("'" + path.string() + "': payload has " + std::to_string(actual) + " bytes, expected " +
                      std::to_string(expected) + " for shape " + to_string(shape));
  }
  in.seekg(payload_start);
  Volume v(shape);
  in.read(reinterpret_cast<char*>(v.raw()), static_cast<std::streamsize>(expected));
  if (!in) throw FormatError("'" + path.string() + "': read failed");
  return v;
}

}  // namespace ttvi::synth
