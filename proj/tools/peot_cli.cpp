// Command-line front end. Talks to the library only through peot.h.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "peot/peot.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes: 0 ok, 2 config, 3 data, 4 numeric, 1 anything else.
struct CliError {
  int code;
  std::string kind;
  std::string message;
};

[[noreturn]] void config_error(const std::string& msg) { throw CliError{2, "config", msg}; }

void check(peot_status st) {
  if (st == PEOT_OK) return;
  const std::string msg = peot_last_error();
  switch (st) {
    case PEOT_ERR_INVALID: throw CliError{2, "invalid-input", msg};
    case PEOT_ERR_CONFIG: throw CliError{2, "config", msg};
    case PEOT_ERR_DATA: throw CliError{3, "data", msg};
    case PEOT_ERR_NUMERIC: throw CliError{4, "numeric", msg};
    case PEOT_ERR_IO: throw CliError{3, "io", msg};
    default: throw CliError{1, "internal", msg};
  }
}

struct DatasetDeleter {
  void operator()(peot_dataset* p) const { peot_dataset_free(p); }
};
struct TreeDeleter {
  void operator()(peot_tree* p) const { peot_tree_free(p); }
};
struct GbtDeleter {
  void operator()(peot_gbt* p) const { peot_gbt_free(p); }
};
using DatasetPtr = std::unique_ptr<peot_dataset, DatasetDeleter>;
using TreePtr = std::unique_ptr<peot_tree, TreeDeleter>;
using GbtPtr = std::unique_ptr<peot_gbt, GbtDeleter>;

// Takes ownership of a library-allocated string.
std::string take(char* s) {
  if (!s) return {};
  std::string out(s);
  peot_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError{3, "io", "cannot open '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw CliError{3, "io", "cannot write '" + path.string() + "'"};
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    config_error("'" + path + "' is not valid JSON: " + e.what());
  }
}

json default_config(const char* kind) {
  char* text = nullptr;
  check(peot_default_config(kind, &text));
  return json::parse(take(text));
}

// Values after a --key are typed after the default they replace.
json coerce(const std::string& key, const std::string& text, const json& like) {
  try {
    if (like.is_boolean()) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      config_error("--" + key + " expects true or false");
    }
    if (like.is_number_integer() || like.is_number_unsigned()) {
      std::size_t used = 0;
      const long long v = std::stoll(text, &used);
      if (used != text.size()) config_error("--" + key + " expects an integer");
      if (like.is_number_unsigned() && v < 0) config_error("--" + key + " must be non-negative");
      return like.is_number_unsigned() ? json(static_cast<unsigned long long>(v)) : json(v);
    }
    if (like.is_number_float()) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) config_error("--" + key + " expects a number");
      return v;
    }
    if (like.is_array()) {
      json out = json::array();
      const json elem = like.empty() ? json(0.0) : like.front();
      // "0,0.1" or "[0,0.1]"
      std::string body = text;
      if (body.size() >= 2 && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
      std::stringstream ss(body);
      std::string part;
      while (std::getline(ss, part, ',')) out.push_back(coerce(key, part, elem));
      return out;
    }
    if (like.is_string()) return text;
  } catch (const std::invalid_argument&) {
    config_error("--" + key + ": cannot parse '" + text + "'");
  } catch (const std::out_of_range&) {
    config_error("--" + key + ": '" + text + "' is out of range");
  }
  config_error("--" + key + " cannot be set from the command line");
}

json* lookup(json& cfg, const std::string& dotted) {
  json* node = &cfg;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) return nullptr;
    node = &(*node)[part];
  }
  return node;
}

// Applies leftover `--key value` / `--key=value` pairs onto a config document.
void apply_flags(json& cfg, const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) config_error("unexpected argument '" + a + "'");
    std::string key = a.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= args.size()) config_error("--" + key + " needs a value");
      value = args[++i];
    }
    json* slot = lookup(cfg, key);
    if (!slot || slot->is_object()) config_error("unknown option --" + key);
    *slot = coerce(key, value, *slot);
  }
}

void set_seeds(json& cfg, std::uint64_t seed) {
  if (!cfg.is_object()) return;
  for (auto& [key, value] : cfg.items()) {
    if (key == "seed")
      value = seed;
    else if (value.is_object())
      set_seeds(value, seed);
  }
}

void merge_file(json& cfg, const std::string& path) {
  json file = parse_json_file(path);
  // A resolved config written by an earlier run carries its parameters
  // under "config".
  if (file.is_object() && file.contains("command") && file.contains("config")) file = file["config"];
  if (!file.is_object()) config_error("config file must hold a JSON object");
  cfg.merge_patch(file);
}

std::string flag_help(const json& defaults, const std::string& prefix = "") {
  std::string out;
  for (const auto& [key, value] : defaults.items()) {
    if (value.is_object()) {
      out += flag_help(value, prefix + key + ".");
      continue;
    }
    out += "  --" + prefix + key + " (default " + value.dump() + ")\n";
  }
  return out;
}

struct Common {
  std::string out;
  std::string config_file;
  std::optional<std::uint64_t> seed_flag;
};

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("PEOT_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    config_error("PEOT_SEED must be a non-negative integer");
  }
}

std::string dataset_info(const peot_dataset* ds);

void set_key(json& cfg, const std::string& name, const json& v) {
  if (!cfg.is_object()) return;
  for (auto& [key, value] : cfg.items()) {
    if (key == name)
      value = v;
    else if (value.is_object())
      set_key(value, name, v);
  }
}

// Synthetic seizure windows are ~25% positive, so their trees train with
// inverse-frequency class weights unless the config says otherwise.
void apply_dataset_defaults(json& cfg, const std::string& data_path) {
  if (data_path.empty()) return;
  std::error_code ec;
  if (!fs::exists(data_path, ec)) return;
  peot_dataset* raw = nullptr;
  if (peot_dataset_load(data_path.c_str(), &raw) != PEOT_OK) return;
  DatasetPtr ds(raw);
  const json info = json::parse(dataset_info(ds.get()));
  if (info.value("provenance", "").rfind("synthetic:seizure", 0) == 0) set_key(cfg, "class_weighted", true);
}

// defaults <- dataset defaults <- PEOT_SEED <- config file <- --seed and
// --key flags.
json resolve(const char* kind, const Common& c, const std::vector<std::string>& extras,
             const std::string& data_path = "") {
  json cfg = default_config(kind);
  apply_dataset_defaults(cfg, data_path);
  if (auto s = env_seed()) set_seeds(cfg, *s);
  if (!c.config_file.empty()) merge_file(cfg, c.config_file);
  if (c.seed_flag) set_seeds(cfg, *c.seed_flag);
  apply_flags(cfg, extras);
  return cfg;
}

std::optional<std::uint64_t> effective_seed(const Common& c) {
  if (c.seed_flag) return c.seed_flag;
  return env_seed();
}

fs::path prepare_out(const Common& c) {
  if (c.out.empty()) config_error("--out is required");
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw CliError{3, "io", "cannot create '" + c.out + "': " + ec.message()};
  return c.out;
}

void write_resolved(const fs::path& dir, const std::string& command, const json& config, const json& inputs,
                    const Common& c, const json& split = nullptr) {
  json doc = {{"command", command},
              {"config", config},
              {"inputs", inputs},
              {"library_version", peot_version()}};
  const auto seed = effective_seed(c);
  doc["seed"] = seed ? json(*seed) : json(nullptr);
  if (!split.is_null()) doc["split"] = split;
  write_file(dir / "config.json", doc.dump(2) + "\n");
}

DatasetPtr load_dataset(const std::string& path) {
  if (path.empty()) config_error("--data is required");
  peot_dataset* ds = nullptr;
  check(peot_dataset_load(path.c_str(), &ds));
  return DatasetPtr(ds);
}

struct Split {
  int folds = 0;
  int fold = 0;
  std::uint64_t seed = 1;

  json to_json() const { return folds > 0 ? json{{"folds", folds}, {"fold", fold}, {"seed", seed}} : json(nullptr); }
};

// Returns (train, test); without folds both are the full dataset.
std::pair<DatasetPtr, DatasetPtr> apply_split(const std::string& data_path, const Split& s) {
  if (s.folds == 0) return {load_dataset(data_path), load_dataset(data_path)};
  DatasetPtr all = load_dataset(data_path);
  peot_dataset *train = nullptr, *test = nullptr;
  check(peot_dataset_split(all.get(), s.folds, s.fold, s.seed, &train, &test));
  return {DatasetPtr(train), DatasetPtr(test)};
}

std::string dataset_info(const peot_dataset* ds) {
  char* text = nullptr;
  check(peot_dataset_info_json(ds, &text));
  return take(text);
}

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
  sub->add_option("--out", c.out, "Output directory")->required(needs_out);
  sub->add_option("--config", c.config_file, "JSON config file (flags override it)");
  sub->add_option("--seed", c.seed_flag, "Seed for every seeded stage (overrides PEOT_SEED)");
  sub->allow_extras();
}

void add_split(CLI::App* sub, Split& s) {
  sub->add_option("--folds", s.folds, "Hold out one of k folds (0 = use all data)")->check(CLI::NonNegativeNumber);
  sub->add_option("--fold", s.fold, "Held-out fold index")->check(CLI::NonNegativeNumber);
  sub->add_option("--split_seed", s.seed, "Seed of the fold assignment");
}

json model_doc(const std::string& path) {
  if (path.empty()) config_error("--model is required");
  return parse_json_file(path);
}

bool is_tree(const json& doc) {
  if (!doc.is_object() || !doc.contains("format")) throw CliError{3, "data", "model file lacks a format tag"};
  return doc["format"] == "oblique_tree";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power-efficient oblique trees: training, compression and evaluation"};
  app.require_subcommand(1);

  Common common;
  Split split;
  std::string data_path, model_path, method = "tree", format, images, labels, recording, features_file, task;
  std::vector<std::string> models;
  double fs_hz = 0.0;
  std::size_t n_windows = 600;
  bool benchmark = false;

  auto* ingest = app.add_subcommand("ingest", "Convert IDX or CSV input into a dataset container");
  add_common(ingest, common);
  ingest->add_option("--format", format, "idx or csv")->required()->check(CLI::IsMember({"idx", "csv"}));
  ingest->add_option("--images", images, "IDX image file (.gz accepted)");
  ingest->add_option("--labels", labels, "IDX label file or window label CSV");
  ingest->add_option("--recording", recording, "Recording CSV (time,ch0,...)");
  ingest->add_option("--features", features_file, "Feature config JSON");
  ingest->add_option("--fs", fs_hz, "Sampling rate (0 = from time column)");

  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic recording");
  add_common(synth, common);
  synth->add_option("--task", task, "seizure, tremor or finger")->required();
  synth->add_option("--n_windows", n_windows, "Number of one-second windows");

  auto* train = app.add_subcommand("train", "Train an oblique tree or a boosted ensemble");
  add_common(train, common);
  train->add_option("--data", data_path, "Dataset container")->required();
  train->add_option("--method", method, "tree or gbt")->check(CLI::IsMember({"tree", "gbt"}));
  add_split(train, split);
  train->footer("Tree parameters:\n" + flag_help(default_config("train")) + "Boosting parameters (--method gbt):\n" +
                flag_help(default_config("gbt")));

  auto* compress = app.add_subcommand("compress", "Prune and share a tree, or quantize a boosted ensemble");
  add_common(compress, common);
  compress->add_option("--model", model_path, "Model file")->required();
  compress->add_option("--data", data_path, "Dataset container (fine-tuning and evaluation)");
  add_split(compress, split);
  compress->footer("Tree compression parameters:\n" + flag_help(default_config("compress")) +
                   "Ensemble quantization parameters:\n  --threshold_bits (default 10)\n  --leaf_bits (default 3)\n");

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a dataset or a held-out fold");
  add_common(eval, common);
  eval->add_option("--model", model_path, "Model file")->required();
  eval->add_option("--data", data_path, "Dataset container (default: the one named in --config)");
  add_split(eval, split);

  auto* sweep = app.add_subcommand("sweep", "Cross-validated lambda x depth trade-off sweep");
  add_common(sweep, common);
  sweep->add_option("--data", data_path, "Dataset container")->required();
  sweep->footer("Sweep parameters:\n" + flag_help(default_config("sweep")));

  auto* report = app.add_subcommand("report", "Normalized comparison table");
  add_common(report, common);
  report->add_option("--data", data_path, "Dataset container")->required();
  report->add_option("--models", models, "Model files; the first one is the baseline");
  report->add_flag("--benchmark", benchmark, "Cross-validate gbt, pegb and peot from scratch");
  report->footer("Benchmark parameters:\n" + flag_help(default_config("benchmark")));

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) return app.exit(e);
      config_error(e.what());
    }

    if (*ingest) {
      const fs::path out = prepare_out(common);
      peot_dataset* raw = nullptr;
      json inputs;
      if (format == "idx") {
        if (images.empty() || labels.empty()) config_error("idx ingest needs --images and --labels");
        check(peot_dataset_from_idx(images.c_str(), labels.c_str(), &raw));
        inputs = {{"format", "idx"}, {"images", images}, {"labels", labels}};
      } else {
        if (recording.empty() || labels.empty() || features_file.empty())
          config_error("csv ingest needs --recording, --labels and --features");
        const std::string features = read_file(features_file);
        check(peot_dataset_from_csv(recording.c_str(), labels.c_str(), features.c_str(), fs_hz, &raw));
        inputs = {{"format", "csv"}, {"recording", recording}, {"labels", labels}, {"features", features_file},
                  {"fs", fs_hz}};
      }
      DatasetPtr ds(raw);
      check(peot_dataset_save(ds.get(), (out / "dataset.peds").string().c_str()));
      write_file(out / "info.json", dataset_info(ds.get()) + "\n");
      write_resolved(out, "ingest", json::object(), inputs, common);
    } else if (*synth) {
      const fs::path out = prepare_out(common);
      json cfg = {{"task", task}, {"n_windows", n_windows}, {"seed", 1}};
      if (auto s = env_seed()) cfg["seed"] = *s;
      if (!common.config_file.empty()) merge_file(cfg, common.config_file);
      if (common.seed_flag) cfg["seed"] = *common.seed_flag;
      apply_flags(cfg, synth->remaining());
      peot_dataset* raw = nullptr;
      char* note = nullptr;
      check(peot_synth(cfg["task"].get<std::string>().c_str(), cfg["n_windows"].get<std::size_t>(),
                       cfg["seed"].get<std::uint64_t>(), out.string().c_str(), &raw, &note));
      DatasetPtr ds(raw);
      write_file(out / "note.txt", take(note) + "\n");
      check(peot_dataset_save(ds.get(), (out / "dataset.peds").string().c_str()));
      write_file(out / "info.json", dataset_info(ds.get()) + "\n");
      write_resolved(out, "synth", cfg, json::object(), common);
    } else if (*train) {
      const fs::path out = prepare_out(common);
      const char* kind = method == "tree" ? "train" : "gbt";
      const json cfg = resolve(kind, common, train->remaining(), data_path);
      auto [train_ds, test_ds] = apply_split(data_path, split);
      const std::string cfg_text = cfg.dump();
      std::string metrics;
      const std::string model_file = (out / "model.json").string();
      if (method == "tree") {
        peot_tree* raw = nullptr;
        check(peot_tree_train(train_ds.get(), cfg_text.c_str(), &raw));
        TreePtr tree(raw);
        check(peot_tree_save(tree.get(), model_file.c_str()));
        char* m = nullptr;
        check(peot_tree_evaluate(tree.get(), test_ds.get(), &m));
        metrics = take(m);
      } else {
        peot_gbt* raw = nullptr;
        check(peot_gbt_train(train_ds.get(), cfg_text.c_str(), &raw));
        GbtPtr model(raw);
        check(peot_gbt_save(model.get(), model_file.c_str()));
        char* m = nullptr;
        check(peot_gbt_evaluate(model.get(), test_ds.get(), &m));
        metrics = take(m);
      }
      write_file(out / "metrics.json", metrics + "\n");
      write_resolved(out, "train", cfg, {{"data", data_path}, {"method", method}}, common, split.to_json());
    } else if (*compress) {
      const fs::path out = prepare_out(common);
      const json doc = model_doc(model_path);
      const std::string model_file = (out / "model.json").string();
      if (is_tree(doc)) {
        const json cfg = resolve("compress", common, compress->remaining(), data_path);
        if (data_path.empty()) config_error("tree compression needs --data for fine-tuning");
        auto [train_ds, test_ds] = apply_split(data_path, split);
        peot_tree* raw = nullptr;
        check(peot_tree_load(model_path.c_str(), &raw));
        TreePtr tree(raw);
        char* rep = nullptr;
        check(peot_tree_compress(tree.get(), train_ds.get(), test_ds.get(), cfg.dump().c_str(), &rep));
        write_file(out / "report.json", take(rep) + "\n");
        check(peot_tree_save(tree.get(), model_file.c_str()));
        write_resolved(out, "compress", cfg, {{"model", model_path}, {"data", data_path}}, common, split.to_json());
      } else {
        json cfg = {{"threshold_bits", 10}, {"leaf_bits", 3}};
        if (!common.config_file.empty()) merge_file(cfg, common.config_file);
        apply_flags(cfg, compress->remaining());
        peot_gbt* raw = nullptr;
        check(peot_gbt_load(model_path.c_str(), &raw));
        GbtPtr model(raw);
        check(peot_gbt_quantize(model.get(), cfg["threshold_bits"].get<int>(), cfg["leaf_bits"].get<int>()));
        check(peot_gbt_save(model.get(), model_file.c_str()));
        if (!data_path.empty()) {
          auto [train_ds, test_ds] = apply_split(data_path, split);
          char* m = nullptr;
          check(peot_gbt_evaluate(model.get(), test_ds.get(), &m));
          write_file(out / "report.json", take(m) + "\n");
        }
        write_resolved(out, "compress", cfg, {{"model", model_path}, {"data", data_path}}, common, split.to_json());
      }
    } else if (*eval) {
      const fs::path out = prepare_out(common);
      if (!eval->remaining().empty()) config_error("unexpected argument '" + eval->remaining().front() + "'");
      // A resolved config from train/compress supplies the dataset and split.
      if (!common.config_file.empty()) {
        const json prior = parse_json_file(common.config_file);
        if (data_path.empty() && prior.contains("inputs") && prior["inputs"].contains("data"))
          data_path = prior["inputs"]["data"].get<std::string>();
        if (split.folds == 0 && prior.contains("split") && prior["split"].is_object()) {
          split.folds = prior["split"]["folds"].get<int>();
          split.fold = prior["split"]["fold"].get<int>();
          split.seed = prior["split"]["seed"].get<std::uint64_t>();
        }
      }
      const json doc = model_doc(model_path);
      auto [train_ds, test_ds] = apply_split(data_path, split);
      std::string metrics;
      if (is_tree(doc)) {
        peot_tree* raw = nullptr;
        check(peot_tree_load(model_path.c_str(), &raw));
        TreePtr tree(raw);
        char* m = nullptr;
        check(peot_tree_evaluate(tree.get(), test_ds.get(), &m));
        metrics = take(m);
      } else {
        peot_gbt* raw = nullptr;
        check(peot_gbt_load(model_path.c_str(), &raw));
        GbtPtr model(raw);
        char* m = nullptr;
        check(peot_gbt_evaluate(model.get(), test_ds.get(), &m));
        metrics = take(m);
      }
      write_file(out / "metrics.json", metrics + "\n");
      write_resolved(out, "eval", json::object(), {{"model", model_path}, {"data", data_path}}, common,
                     split.to_json());
    } else if (*sweep) {
      const fs::path out = prepare_out(common);
      const json cfg = resolve("sweep", common, sweep->remaining(), data_path);
      DatasetPtr ds = load_dataset(data_path);
      char *csv = nullptr, *js = nullptr, *gp = nullptr;
      check(peot_sweep(ds.get(), cfg.dump().c_str(), &csv, &js, &gp));
      write_file(out / "sweep.csv", take(csv));
      write_file(out / "sweep.json", take(js) + "\n");
      write_file(out / "sweep.gp", take(gp));
      write_resolved(out, "sweep", cfg, {{"data", data_path}}, common);
    } else if (*report) {
      const fs::path out = prepare_out(common);
      DatasetPtr ds = load_dataset(data_path);
      char *js = nullptr, *csv = nullptr;
      if (benchmark) {
        const json cfg = resolve("benchmark", common, report->remaining(), data_path);
        check(peot_benchmark(ds.get(), cfg.dump().c_str(), &js, &csv));
        write_resolved(out, "report", cfg, {{"data", data_path}, {"benchmark", true}}, common);
      } else {
        if (models.empty()) config_error("report needs --models or --benchmark");
        if (!report->remaining().empty()) config_error("unexpected argument '" + report->remaining().front() + "'");
        std::vector<const char*> paths;
        for (const auto& m : models) paths.push_back(m.c_str());
        check(peot_report(ds.get(), paths.data(), paths.size(), &js, &csv));
        write_resolved(out, "report", json::object(), {{"data", data_path}, {"models", models}}, common);
      }
      write_file(out / "report.json", take(js) + "\n");
      write_file(out / "report.csv", take(csv));
    }
  } catch (const CliError& e) {
    std::cerr << json{{"error", {{"code", e.code}, {"kind", e.kind}, {"message", e.message}}}}.dump() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", 1}, {"kind", "internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
  return 0;
}
