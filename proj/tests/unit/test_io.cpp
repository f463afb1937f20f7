#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "peot/error.hpp"
#include "peot/io.hpp"
#include "peot/model_io.hpp"
#include "peot/signal_features.hpp"
#include "peot/synth.hpp"

using namespace peot;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "peot_unit_io";
  fs::create_directories(dir);
  return dir / name;
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

void write_gz(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  gzFile f = gzopen(p.string().c_str(), "wb");
  REQUIRE(f);
  REQUIRE(gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size())) == static_cast<int>(bytes.size()));
  gzclose(f);
}

void write_raw(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

ErrorKind kind_of(const std::function<void()>& fn, std::string* message = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidInput;
}

}  // namespace

TEST_CASE("IDX files, plain and gzipped") {
  std::vector<std::uint8_t> img, lab;
  put_be32(img, 0x803);
  put_be32(img, 3);
  put_be32(img, 2);
  put_be32(img, 2);
  for (int i = 0; i < 12; ++i) img.push_back(static_cast<std::uint8_t>(i * 20));
  put_be32(lab, 0x801);
  put_be32(lab, 3);
  lab.insert(lab.end(), {7, 0, 3});

  write_gz(scratch("img.gz"), img);
  write_gz(scratch("lab.gz"), lab);
  const Dataset d = dataset_from_idx(scratch("img.gz").string(), scratch("lab.gz").string());
  CHECK(d.size() == 3);
  CHECK(d.num_features() == 4);
  CHECK(d.num_classes == 8);
  CHECK(d.features(1, 2) == doctest::Approx(6 * 20 / 255.0));
  CHECK(d.feature_names[3] == "px_1_1");
  CHECK(d.labels == std::vector<int>{7, 0, 3});

  write_raw(scratch("img.raw"), std::string(img.begin(), img.end()));
  CHECK(read_idx_images(scratch("img.raw").string()).pixels.size() == 12);

  auto bad = img;
  bad[3] = 0x01;
  write_raw(scratch("bad.raw"), std::string(bad.begin(), bad.end()));
  std::string msg;
  CHECK(kind_of([&] { read_idx_images(scratch("bad.raw").string()); }, &msg) == ErrorKind::Data);
  CHECK(msg.find("byte 0") != std::string::npos);

  auto short_img = img;
  short_img.pop_back();
  write_raw(scratch("short.raw"), std::string(short_img.begin(), short_img.end()));
  CHECK(kind_of([&] { read_idx_images(scratch("short.raw").string()); }) == ErrorKind::Data);
  CHECK(kind_of([&] { read_idx_labels("/nonexistent/file"); }) == ErrorKind::Io);
}

TEST_CASE("recording CSV") {
  write_raw(scratch("rec.csv"), "time,ch0,ch1\n0,1,2\n0.5,3,4\n1.0,5,6\n");
  const Recording r = read_recording_csv(scratch("rec.csv").string());
  CHECK(r.fs == 2.0);
  CHECK(r.channels.size() == 2);
  CHECK(r.channels[1] == std::vector<double>{2, 4, 6});

  std::string msg;
  write_raw(scratch("empty.csv"), "time,ch0\n");
  CHECK(kind_of([&] { read_recording_csv(scratch("empty.csv").string()); }, &msg) == ErrorKind::Data);
  CHECK(msg.find("empty dataset") != std::string::npos);

  write_raw(scratch("short.csv"), "time,ch0,ch1\n0,1,2\n1,3\n");
  CHECK(kind_of([&] { read_recording_csv(scratch("short.csv").string()); }, &msg) == ErrorKind::Data);
  CHECK(msg.find("byte 19") != std::string::npos);

  write_raw(scratch("nan.csv"), "time,ch0\n0,1\n1,x\n");
  CHECK(kind_of([&] { read_recording_csv(scratch("nan.csv").string()); }, &msg) == ErrorKind::Data);
  CHECK(msg.find("byte 15") != std::string::npos);

  Recording w;
  w.fs = 4.0;
  w.channels = {{0.25, -1.5, 3.0}, {1e-3, 2.0, 7.0}};
  write_recording_csv(w, scratch("w.csv").string());
  const Recording back = read_recording_csv(scratch("w.csv").string());
  CHECK(back.fs == 4.0);
  CHECK(back.channels == w.channels);
}

TEST_CASE("window labels CSV") {
  write_window_labels_csv({1, 0, 2}, scratch("lab.csv").string());
  CHECK(read_window_labels_csv(scratch("lab.csv").string()) == std::vector<int>{1, 0, 2});
  write_raw(scratch("dup.csv"), "window_index,label\n0,1\n0,1\n");
  CHECK(kind_of([&] { read_window_labels_csv(scratch("dup.csv").string()); }) == ErrorKind::Data);
}

TEST_CASE("dataset container") {
  const Dataset d = synth_dataset(SynthTask::Tremor, 120, 4);
  save_dataset(d, scratch("d.peot").string());
  const Dataset b = load_dataset(scratch("d.peot").string());
  CHECK(b.fingerprint() == d.fingerprint());
  CHECK(b.features == d.features);
  CHECK(b.labels == d.labels);
  CHECK(b.provenance == d.provenance);
  CHECK(b.temporal == d.temporal);
  CHECK(b.feature_names == d.feature_names);

  write_raw(scratch("junk.peot"), "not a dataset");
  CHECK(kind_of([&] { load_dataset(scratch("junk.peot").string()); }) == ErrorKind::Data);

  // Flip one payload byte: the stored fingerprint no longer matches.
  std::string raw;
  {
    std::ifstream in(scratch("d.peot"), std::ios::binary);
    raw.assign(std::istreambuf_iterator<char>(in), {});
  }
  raw[raw.size() - 5] ^= 0x10;
  write_raw(scratch("corrupt.peot"), raw);
  CHECK(kind_of([&] { load_dataset(scratch("corrupt.peot").string()); }) == ErrorKind::Data);
}

TEST_CASE("synthetic tasks") {
  const SynthRecording a = synthesize(SynthTask::Seizure, 300, 3);
  const SynthRecording b = synthesize(SynthTask::Seizure, 300, 3);
  CHECK(a.recording.channels == b.recording.channels);
  CHECK(a.labels == b.labels);
  CHECK(synthesize(SynthTask::Seizure, 300, 4).labels != a.labels);
  CHECK(a.recording.num_samples() == 300 * kSynthWindow);

  // Positive windows carry much more line length on the burst channels.
  double pos = 0, neg = 0;
  std::size_t np = 0, nn = 0;
  for (std::size_t w = 0; w < a.labels.size(); ++w) {
    const Window win{std::span<const double>(a.recording.channels[0]).subspan(w * kSynthWindow, kSynthWindow),
                     kSynthFs};
    (a.labels[w] ? pos : neg) += line_length(win);
    (a.labels[w] ? np : nn) += 1;
  }
  REQUIRE(np > 0);
  REQUIRE(nn > 0);
  CHECK(pos / static_cast<double>(np) >= 2.0 * neg / static_cast<double>(nn));
  const double frac = static_cast<double>(np) / 300.0;
  CHECK(frac > 0.1);
  CHECK(frac < 0.45);

  const Dataset f = synth_dataset(SynthTask::Finger, 400, 2);
  CHECK(f.num_classes == 5);
  std::vector<int> count(5, 0);
  for (int y : f.labels) ++count[static_cast<std::size_t>(y)];
  for (int c : count) CHECK(c == 80);
  CHECK(f.num_features() == 32);
  CHECK(f.provenance == "synthetic:finger:seed=2");
  CHECK(f.temporal);
  CHECK(kind_of([] { synthesize(SynthTask::Tremor, 10, 1); }) == ErrorKind::InvalidInput);
}

TEST_CASE("model documents round trip byte for byte") {
  for (double v : {0.0, -0.0, 1.0 / 3.0, 1e-300, -2.5e300, 4.9e-324})
    CHECK(std::signbit(parse_hex_double(hex_double(v))) == std::signbit(v));
  for (double v : {1.0 / 3.0, 1e-300, -2.5e300, 4.9e-324}) CHECK(parse_hex_double(hex_double(v)) == v);
  CHECK_THROWS_AS(parse_hex_double("0x1.8p"), Error);

  ObliqueTree t = oracle::random_tree(TreeShape{2, 5, 3, 3}, 8);
  const std::string s1 = dump_model(tree_to_json(t));
  const std::string s2 = dump_model(tree_to_json(tree_from_json(nlohmann::json::parse(s1))));
  CHECK(s1 == s2);
  CHECK(model_format(nlohmann::json::parse(s1)) == "oblique_tree");

  auto bad = nlohmann::json::parse(s1);
  bad["version"] = 99;
  CHECK(kind_of([&] { tree_from_json(bad); }) == ErrorKind::Data);
  bad = nlohmann::json::parse(s1);
  bad["params"].erase(0);
  CHECK(kind_of([&] { tree_from_json(bad); }) == ErrorKind::Data);
}
