#include <limits>

#include "byte_io.hpp"
#include "rseg/network.hpp"

namespace rseg {

namespace {
constexpr std::string_view kMagic = "RSEGCKPT";
}

std::string serialize_checkpoint(const ParameterSet& params) {
  detail::ByteWriter w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  const NetworkSpec& spec = params.spec();
  w.put<std::uint32_t>(std::uint32_t(spec.in_channels));
  w.put<std::uint32_t>(std::uint32_t(spec.num_classes));
  w.put<std::uint32_t>(std::uint32_t(spec.base_width));
  w.put<std::uint32_t>(std::uint32_t(spec.depth));
  w.put<std::uint64_t>(spec.seed);
  w.put<std::uint32_t>(std::uint32_t(params.count()));
  for (const auto& t : params) {
    w.put<std::uint32_t>(std::uint32_t(t.name.size()));
    w.put_bytes(t.name);
    w.put<std::uint32_t>(std::uint32_t(t.value.rank()));
    for (Index d : t.value.shape()) w.put<std::uint32_t>(std::uint32_t(d));
    for (Index i = 0; i < t.value.size(); ++i) w.put<float>(t.value[i]);
  }
  return std::move(w.str());
}

ParameterSet parse_checkpoint(std::string_view bytes, const std::optional<NetworkSpec>& expected) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.take(kMagic.size()) != kMagic) throw FormatError("checkpoint: bad magic bytes");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version));

  NetworkSpec spec;
  spec.in_channels = int(r.get<std::uint32_t>());
  spec.num_classes = int(r.get<std::uint32_t>());
  spec.base_width = int(r.get<std::uint32_t>());
  spec.depth = int(r.get<std::uint32_t>());
  spec.seed = r.get<std::uint64_t>();
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid network spec: ") + e.what());
  }
  if (expected && !(*expected == spec))
    throw FormatError("checkpoint: network spec {" + to_string(spec) + "} does not match expected {" +
                      to_string(*expected) + "}");

  const auto layout = parameter_layout(spec);
  const auto count = r.get<std::uint32_t>();
  if (count != layout.size()) throw FormatError("checkpoint: tensor count does not match network spec");
  std::vector<NamedTensor<float>> tensors;
  tensors.reserve(count);
  for (const ParameterShape& expected_shape : layout) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len));
    if (name != expected_shape.name)
      throw FormatError("checkpoint: found tensor '" + name + "', expected '" + expected_shape.name + "'");
    const auto rank = r.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(Index(r.get<std::uint32_t>()));
    if (shape != expected_shape.shape) throw FormatError("checkpoint: tensor '" + name + "' has wrong shape");
    Tensor value(shape);
    for (Index i = 0; i < value.size(); ++i) value[i] = r.get<float>();
    tensors.push_back({std::move(name), std::move(value)});
  }
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after last tensor");
  return ParameterSet(spec, std::move(tensors));
}

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  detail::write_file(path, serialize_checkpoint(params));
}

ParameterSet load_checkpoint(const std::filesystem::path& path, const std::optional<NetworkSpec>& expected) {
  return parse_checkpoint(detail::read_file(path), expected);
}

}  // namespace rseg
