#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "byte_io.hpp"
#include "rseg/phantom.hpp"

namespace rseg {

namespace fs = std::filesystem;

namespace {

std::map<std::string, long long> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("dataset: cannot open " + path.string());
  std::map<std::string, long long> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("dataset manifest: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    long long parsed = 0;
    auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), parsed);
    if (ec != std::errc() || end != value.data() + value.size())
      throw FormatError("dataset manifest: non-integer value for '" + key + "'");
    kv[key] = parsed;
  }
  for (const char* key : {"format_version", "count", "height", "width", "class_count"})
    if (!kv.count(key)) throw FormatError(std::string("dataset manifest: missing key '") + key + "'");
  return kv;
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  fs::create_directories(dir);
  {
    std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
    manifest << "format_version=" << kDatasetFormatVersion << '\n'
             << "count=" << dataset.size() << '\n'
             << "height=" << dataset.height << '\n'
             << "width=" << dataset.width << '\n'
             << "class_count=" << dataset.class_count << '\n';
    if (!manifest) throw FormatError("dataset: cannot write manifest in " + dir.string());
  }
  detail::ByteWriter images;
  for (const Tensor& img : dataset.images)
    for (Index i = 0; i < img.size(); ++i) images.put<float>(img[i]);
  detail::write_file(dir / "images.f32", images.str());

  auto label_bytes = [](const LabelBatch& batch) {
    std::string out;
    for (const LabelMap& m : batch) out.append(reinterpret_cast<const char*>(m.data()), std::size_t(m.size()));
    return out;
  };
  detail::write_file(dir / "labels_clean.u8", label_bytes(dataset.clean_labels));
  detail::write_file(dir / "labels_noisy.u8", label_bytes(dataset.noisy_labels));

  std::string splits;
  for (Split s : dataset.splits) splits.push_back(char(s));
  detail::write_file(dir / "splits.u8", splits);
}

Dataset read_dataset(const fs::path& dir) {
  const auto kv = read_manifest(dir / "manifest.txt");
  if (kv.at("format_version") != kDatasetFormatVersion)
    throw FormatError("dataset: unsupported format_version " + std::to_string(kv.at("format_version")));
  const long long count = kv.at("count"), height = kv.at("height"), width = kv.at("width");
  const long long classes = kv.at("class_count");
  if (count < 0 || height <= 0 || width <= 0 || classes < 2 || classes > 255)
    throw FormatError("dataset manifest: invalid dimensions");

  Dataset ds;
  ds.height = Index(height);
  ds.width = Index(width);
  ds.class_count = int(classes);
  const std::size_t pixels = std::size_t(count) * std::size_t(height * width);

  const std::string image_bytes = detail::read_file(dir / "images.f32");
  if (image_bytes.size() != pixels * sizeof(float))
    throw FormatError("dataset: images.f32 holds " + std::to_string(image_bytes.size()) + " bytes, manifest implies " +
                      std::to_string(pixels * sizeof(float)));
  detail::ByteReader images(image_bytes, "images.f32");
  for (long long s = 0; s < count; ++s) {
    Tensor img({1, ds.height, ds.width});
    for (Index i = 0; i < img.size(); ++i) img[i] = images.get<float>();
    ds.images.push_back(std::move(img));
  }

  auto read_labels = [&](const char* name) {
    const std::string bytes = detail::read_file(dir / name);
    if (bytes.size() != pixels)
      throw FormatError(std::string("dataset: ") + name + " size does not match manifest");
    LabelBatch batch;
    const std::size_t hw = std::size_t(height * width);
    for (long long s = 0; s < count; ++s) {
      LabelMap m(ds.height, ds.width);
      std::memcpy(m.data(), bytes.data() + std::size_t(s) * hw, hw);
      if (hw > 0 && m.maxCoeff() >= classes) throw FormatError(std::string("dataset: ") + name + " has labels out of range");
      batch.push_back(std::move(m));
    }
    return batch;
  };
  ds.clean_labels = read_labels("labels_clean.u8");
  ds.noisy_labels = read_labels("labels_noisy.u8");

  const std::string split_bytes = detail::read_file(dir / "splits.u8");
  if (split_bytes.size() != std::size_t(count)) throw FormatError("dataset: splits.u8 size does not match manifest");
  for (char c : split_bytes) {
    if (c < 0 || c > 2) throw FormatError("dataset: invalid split tag");
    ds.splits.push_back(Split(c));
  }
  return ds;
}

}  // namespace rseg
