#include "peot/io.hpp"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "peot/error.hpp"

namespace peot {

namespace {

// Whole-file read; gzip streams are inflated, plain files pass through.
std::vector<std::uint8_t> read_maybe_gz(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw_io("cannot open '" + path + "'");
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof buf);
    if (n < 0) {
      int code = 0;
      const std::string msg = gzerror(f, &code);
      gzclose(f);
      throw_data("'" + path + "': decompression failed at byte " + std::to_string(out.size()) + ": " + msg);
    }
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  gzclose(f);
  return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::string& path) {
  if (off + 4 > b.size())
    throw_data("'" + path + "': truncated IDX header at byte " + std::to_string(off));
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

IdxImages read_idx_images(const std::string& path) {
  const auto bytes = read_maybe_gz(path);
  const std::uint32_t magic = read_be32(bytes, 0, path);
  if (magic != 0x00000803u)
    throw_data("'" + path + "': bad IDX image magic " + hex32(magic) + " at byte 0 (expected 0x00000803)");
  IdxImages img;
  img.count = read_be32(bytes, 4, path);
  img.rows = read_be32(bytes, 8, path);
  img.cols = read_be32(bytes, 12, path);
  const std::uint64_t expected = 16 + std::uint64_t{img.count} * img.rows * img.cols;
  if (bytes.size() != expected)
    throw_data("'" + path + "': IDX payload ends at byte " + std::to_string(bytes.size()) + ", header implies " +
               std::to_string(expected));
  img.pixels.assign(bytes.begin() + 16, bytes.end());
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
  const auto bytes = read_maybe_gz(path);
  const std::uint32_t magic = read_be32(bytes, 0, path);
  if (magic != 0x00000801u)
    throw_data("'" + path + "': bad IDX label magic " + hex32(magic) + " at byte 0 (expected 0x00000801)");
  const std::uint32_t count = read_be32(bytes, 4, path);
  if (bytes.size() != 8 + std::uint64_t{count})
    throw_data("'" + path + "': IDX payload ends at byte " + std::to_string(bytes.size()) + ", header implies " +
               std::to_string(8 + std::uint64_t{count}));
  return {bytes.begin() + 8, bytes.end()};
}

Dataset dataset_from_idx(const std::string& images_path, const std::string& labels_path) {
  const IdxImages img = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  if (labels.size() != img.count)
    throw_data("image count " + std::to_string(img.count) + " differs from label count " +
               std::to_string(labels.size()));
  if (img.count == 0) throw_data("'" + images_path + "': empty dataset");
  const std::size_t f = std::size_t{img.rows} * img.cols;
  Dataset ds;
  ds.features.resize(img.count, static_cast<Eigen::Index>(f));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) ds.features.data()[i] = img.pixels[i] / 255.0;
  int max_label = 0;
  ds.labels.reserve(labels.size());
  for (auto l : labels) {
    ds.labels.push_back(l);
    max_label = std::max<int>(max_label, l);
  }
  ds.num_classes = std::max(2, max_label + 1);
  ds.costs.assign(f, 1.0);
  ds.feature_names.reserve(f);
  for (std::size_t r = 0; r < img.rows; ++r)
    for (std::size_t c = 0; c < img.cols; ++c)
      ds.feature_names.push_back("px_" + std::to_string(r) + "_" + std::to_string(c));
  ds.provenance = "idx:" + images_path;
  ds.validate();
  return ds;
}

namespace {

struct CsvLine {
  std::size_t offset;
  std::string_view text;
};

std::vector<CsvLine> split_lines(const std::string& text) {
  std::vector<CsvLine> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back({start, line});
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(std::string_view field, std::size_t offset, const std::string& path) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1), ++offset;
  while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v))
    throw_data("'" + path + "': invalid number '" + std::string(field) + "' at byte " + std::to_string(offset));
  return v;
}

}  // namespace

Recording read_recording_csv(const std::string& path, double fs) {
  const std::string text = read_text_file(path);
  const auto lines = split_lines(text);
  if (lines.size() < 2) throw_data("'" + path + "': empty dataset (no sample rows)");
  const auto header = split_fields(lines[0].text);
  if (header.size() < 2 || header[0] != "time")
    throw_data("'" + path + "': header must be 'time,ch0,...' (byte 0)");
  const std::size_t nch = header.size() - 1;

  Recording rec;
  rec.channels.assign(nch, {});
  std::vector<double> times;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = split_fields(lines[li].text);
    if (fields.size() != header.size())
      throw_data("'" + path + "': row has " + std::to_string(fields.size()) + " fields, header has " +
                 std::to_string(header.size()) + " (byte " + std::to_string(lines[li].offset) + ")");
    std::size_t off = lines[li].offset;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const double v = parse_number(fields[c], off, path);
      if (c == 0)
        times.push_back(v);
      else
        rec.channels[c - 1].push_back(v);
      off += fields[c].size() + 1;
    }
  }
  if (fs > 0.0) {
    rec.fs = fs;
  } else {
    if (times.size() < 2 || !(times[1] > times[0]))
      throw_data("'" + path + "': cannot derive sampling rate from time column");
    rec.fs = 1.0 / (times[1] - times[0]);
  }
  return rec;
}

void write_recording_csv(const Recording& rec, const std::string& path) {
  if (rec.channels.empty() || !(rec.fs > 0.0)) throw_invalid("recording needs channels and fs > 0");
  std::ostringstream os;
  os.precision(17);
  os << "time";
  for (std::size_t c = 0; c < rec.channels.size(); ++c) os << ",ch" << c;
  os << '\n';
  for (std::size_t i = 0; i < rec.num_samples(); ++i) {
    os << static_cast<double>(i) / rec.fs;
    for (const auto& ch : rec.channels) os << ',' << ch[i];
    os << '\n';
  }
  write_text_file(path, os.str());
}

std::vector<int> read_window_labels_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  const auto lines = split_lines(text);
  if (lines.size() < 2) throw_data("'" + path + "': empty label file");
  if (lines[0].text != "window_index,label") throw_data("'" + path + "': header must be 'window_index,label' (byte 0)");
  std::vector<int> labels(lines.size() - 1, -1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = split_fields(lines[li].text);
    if (fields.size() != 2)
      throw_data("'" + path + "': expected 2 fields (byte " + std::to_string(lines[li].offset) + ")");
    const double idx = parse_number(fields[0], lines[li].offset, path);
    const double label = parse_number(fields[1], lines[li].offset + fields[0].size() + 1, path);
    if (idx < 0 || idx >= static_cast<double>(labels.size()) || idx != std::floor(idx) || label < 0 ||
        label != std::floor(label))
      throw_data("'" + path + "': bad window index or label (byte " + std::to_string(lines[li].offset) + ")");
    auto& slot = labels[static_cast<std::size_t>(idx)];
    if (slot >= 0) throw_data("'" + path + "': duplicate window index (byte " + std::to_string(lines[li].offset) + ")");
    slot = static_cast<int>(label);
  }
  return labels;
}

void write_window_labels_csv(const std::vector<int>& labels, const std::string& path) {
  std::string out = "window_index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out += std::to_string(i) + "," + std::to_string(labels[i]) + "\n";
  write_text_file(path, out);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io("cannot write '" + path + "'");
  out << text;
  if (!out) throw_io("write failed for '" + path + "'");
}

}  // namespace peot
