#include "peot/dataset.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "peot/error.hpp"

namespace peot {

const char* error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid_input";
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

namespace {

constexpr char kMagic[8] = {'P', 'E', 'O', 'T', 'D', 'S', '0', '1'};
constexpr int kContainerVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "dataset container assumes a little-endian host");

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t Dataset::fingerprint() const {
  const std::uint64_t dims[3] = {static_cast<std::uint64_t>(features.rows()),
                                 static_cast<std::uint64_t>(features.cols()),
                                 static_cast<std::uint64_t>(num_classes)};
  std::uint64_t h = fnv1a64(dims, sizeof(dims));
  h = fnv1a64(features.data(), sizeof(double) * features.size(), h);
  h = fnv1a64(labels.data(), sizeof(int) * labels.size(), h);
  h = fnv1a64(costs.data(), sizeof(double) * costs.size(), h);
  return h;
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) throw_invalid("subset index out of range");
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(labels[indices[r]]);
  }
  out.num_classes = num_classes;
  out.temporal = temporal;
  out.feature_names = feature_names;
  out.costs = costs;
  out.provenance = provenance;
  return out;
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw_invalid("dataset: feature rows and label count differ");
  if (num_classes < 1) throw_invalid("dataset: num_classes must be >= 1");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw_invalid("dataset: label " + std::to_string(y) + " outside [0, C)");
  if (!costs.empty() && costs.size() != num_features())
    throw_invalid("dataset: cost vector length differs from feature count");
  if (!feature_names.empty() && feature_names.size() != num_features())
    throw_invalid("dataset: feature name count differs from feature count");
}

void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  nlohmann::json header = {
      {"format", "peot.dataset"},
      {"version", kContainerVersion},
      {"rows", ds.size()},
      {"cols", ds.num_features()},
      {"num_classes", ds.num_classes},
      {"temporal", ds.temporal},
      {"feature_names", ds.feature_names},
      {"costs", ds.costs},
      {"provenance", ds.provenance},
      {"fingerprint", fingerprint_hex(ds.fingerprint())},
  };
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(ds.features.data()),
            static_cast<std::streamsize>(sizeof(double) * ds.features.size()));
  std::vector<std::int32_t> labels(ds.labels.begin(), ds.labels.end());
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(sizeof(std::int32_t) * labels.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw_data(path + ": not a dataset container (bad magic at byte 0)");
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw_data(path + ": truncated header at byte 12");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw_data(path + ": malformed header: " + e.what());
  }
  if (header.value("version", 0) != kContainerVersion)
    throw_data(path + ": unsupported container version");

  Dataset ds;
  std::size_t rows = 0, cols = 0;
  try {
    rows = header.at("rows").get<std::size_t>();
    cols = header.at("cols").get<std::size_t>();
    ds.num_classes = header.at("num_classes").get<int>();
    ds.temporal = header.at("temporal").get<bool>();
    ds.feature_names = header.at("feature_names").get<std::vector<std::string>>();
    ds.costs = header.at("costs").get<std::vector<double>>();
    ds.provenance = header.value("provenance", "");
  } catch (const nlohmann::json::exception& e) {
    throw_data(path + ": malformed header: " + e.what());
  }
  ds.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(ds.features.data()),
          static_cast<std::streamsize>(sizeof(double) * rows * cols));
  std::vector<std::int32_t> labels(rows);
  in.read(reinterpret_cast<char*>(labels.data()),
          static_cast<std::streamsize>(sizeof(std::int32_t) * rows));
  if (!in) throw_data(path + ": truncated payload");
  ds.labels.assign(labels.begin(), labels.end());
  if (header.contains("fingerprint") &&
      header["fingerprint"].get<std::string>() != fingerprint_hex(ds.fingerprint()))
    throw_data(path + ": fingerprint mismatch (file corrupted)");
  try {
    ds.validate();
  } catch (const Error& e) {
    throw_data(path + ": " + e.what());
  }
  return ds;
}

}  // namespace peot
