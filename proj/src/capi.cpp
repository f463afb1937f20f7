#include "peot/peot.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>

#include "peot/boosted_baseline.hpp"
#include "peot/compression.hpp"
#include "peot/cost_regularizer.hpp"
#include "peot/dataset.hpp"
#include "peot/error.hpp"
#include "peot/eval_harness.hpp"
#include "peot/io.hpp"
#include "peot/model_io.hpp"
#include "peot/signal_features.hpp"
#include "peot/soft_tree.hpp"
#include "peot/synth.hpp"

struct peot_dataset {
  peot::Dataset data;
};
struct peot_tree {
  peot::ObliqueTree tree;
};
struct peot_gbt {
  peot::GbtModel model;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

template <typename F>
peot_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return PEOT_OK;
  } catch (const peot::Error& e) {
    g_last_error = e.what();
    return static_cast<peot_status>(static_cast<int>(e.kind()));
  } catch (const json::exception& e) {
    g_last_error = std::string("malformed JSON: ") + e.what();
    return PEOT_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PEOT_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PEOT_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) peot::throw_invalid(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void set_string(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

json parse_config(const char* text) {
  if (!text || !*text) return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    peot::throw_config(std::string("config is not valid JSON: ") + e.what());
  }
}

template <typename T>
T config_from(const char* text, T value) {
  const json j = parse_config(text);
  from_json(j, value);
  return value;
}

json load_json_file(const std::string& path) {
  const std::string text = peot::read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    peot::throw_data("'" + path + "' is not valid JSON: " + e.what());
  }
}

double power_unit(const peot::Dataset& ds) {
  return ds.costs.empty() ? 1.0 : *std::min_element(ds.costs.begin(), ds.costs.end());
}

json tree_evaluation(const peot::ObliqueTree& tree, const peot::Dataset& ds) {
  if (static_cast<std::size_t>(tree.shape().num_features) != ds.num_features())
    peot::throw_data("model expects " + std::to_string(tree.shape().num_features) + " features, dataset has " +
                     std::to_string(ds.num_features()));
  const auto pred = peot::predict_labels(tree, ds.features);
  json j;
  j["metrics"] = peot::compute_metrics(ds.labels, pred, std::max(2, ds.num_classes)).to_json();
  j["size"] = {{"dense", peot::model_size_bits(tree, peot::SizeAccounting::DenseFloat32).to_json()},
               {"compressed", peot::model_size_bits(tree, peot::SizeAccounting::PrunedShared).to_json()}};
  j["deployed_power"] = peot::deployed_power(tree, ds.features, ds.costs, peot::kDefaultPruneThreshold);
  j["deployed_power_normalized"] = j["deployed_power"].get<double>() / power_unit(ds);
  j["latency"] = tree.shape().depth;
  j["params_touched"] = {
      {peot::touch_accounting_name(peot::TouchAccounting::InternalOnly),
       peot::params_touched_fraction(tree, ds.row(0), peot::TouchAccounting::InternalOnly)},
      {peot::touch_accounting_name(peot::TouchAccounting::WithLeaves),
       peot::params_touched_fraction(tree, ds.row(0), peot::TouchAccounting::WithLeaves)}};
  j["dataset_fingerprint"] = peot::fingerprint_hex(ds.fingerprint());
  return j;
}

json gbt_evaluation(const peot::GbtModel& model, const peot::Dataset& ds) {
  if (static_cast<std::size_t>(model.num_features) != ds.num_features())
    peot::throw_data("model expects " + std::to_string(model.num_features) + " features, dataset has " +
                     std::to_string(ds.num_features()));
  const auto pred = peot::predict_gbt_labels(model, ds.features);
  json j;
  j["metrics"] = peot::compute_metrics(ds.labels, pred, std::max(2, ds.num_classes)).to_json();
  j["size"] = {{"dense", peot::model_size_bits(model, peot::SizeAccounting::DenseFloat32).to_json()}};
  if (model.quantization.enabled)
    j["size"]["quantized"] = peot::model_size_bits(model, peot::SizeAccounting::QuantizedGbt).to_json();
  j["deployed_power"] = peot::gbt_deployed_power(model, ds.features, ds.costs);
  j["deployed_power_normalized"] = j["deployed_power"].get<double>() / power_unit(ds);
  j["num_trees"] = model.num_trees();
  j["warnings"] = model.warnings;
  j["dataset_fingerprint"] = peot::fingerprint_hex(ds.fingerprint());
  return j;
}

}  // namespace

extern "C" {

const char* peot_version(void) { return "1.0.0"; }

const char* peot_last_error(void) { return g_last_error.c_str(); }

void peot_string_free(char* s) { std::free(s); }

peot_status peot_dataset_load(const char* path, peot_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new peot_dataset{peot::load_dataset(path)};
  });
}

peot_status peot_dataset_save(const peot_dataset* ds, const char* path) {
  return guarded([&] {
    need(ds, "dataset");
    need(path, "path");
    peot::save_dataset(ds->data, path);
  });
}

void peot_dataset_free(peot_dataset* ds) { delete ds; }

peot_status peot_dataset_info_json(const peot_dataset* ds, char** out_json) {
  return guarded([&] {
    need(ds, "dataset");
    need(out_json, "out_json");
    const auto& d = ds->data;
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(d.num_classes, 0)), 0);
    for (int l : d.labels) ++counts[static_cast<std::size_t>(l)];
    const json j = {{"rows", d.size()},
                    {"cols", d.num_features()},
                    {"num_classes", d.num_classes},
                    {"temporal", d.temporal},
                    {"fingerprint", peot::fingerprint_hex(d.fingerprint())},
                    {"provenance", d.provenance},
                    {"class_counts", counts}};
    *out_json = dup_string(j.dump(2));
  });
}

peot_status peot_dataset_from_idx(const char* images_path, const char* labels_path, peot_dataset** out) {
  return guarded([&] {
    need(images_path, "images_path");
    need(labels_path, "labels_path");
    need(out, "out");
    *out = new peot_dataset{peot::dataset_from_idx(images_path, labels_path)};
  });
}

peot_status peot_dataset_from_csv(const char* recording_path, const char* labels_path, const char* feature_config_json,
                                  double fs, peot_dataset** out) {
  return guarded([&] {
    need(recording_path, "recording_path");
    need(labels_path, "labels_path");
    need(out, "out");
    const peot::FeatureConfig cfg = peot::feature_config_from_json(parse_config(feature_config_json));
    const peot::Recording rec = peot::read_recording_csv(recording_path, fs);
    const auto labels = peot::read_window_labels_csv(labels_path);
    *out = new peot_dataset{peot::make_signal_dataset(rec, labels, cfg, std::string("csv:") + recording_path)};
  });
}

peot_status peot_synth(const char* task, size_t n_windows, uint64_t seed, const char* csv_dir, peot_dataset** out,
                       char** out_note) {
  return guarded([&] {
    need(task, "task");
    need(out, "out");
    const peot::SynthTask t = peot::parse_synth_task(task);
    const peot::SynthRecording s = peot::synthesize(t, n_windows, seed);
    peot::Dataset ds = peot::make_signal_dataset(
        s.recording, s.labels, s.features, std::string("synthetic:") + task + ":seed=" + std::to_string(seed));
    ds.num_classes = s.num_classes;
    if (csv_dir) {
      const std::filesystem::path dir(csv_dir);
      peot::write_recording_csv(s.recording, (dir / "recording.csv").string());
      peot::write_window_labels_csv(s.labels, (dir / "labels.csv").string());
      peot::write_text_file((dir / "features.json").string(), peot::feature_config_to_json(s.features).dump(2) + "\n");
    }
    set_string(out_note, s.note);
    *out = new peot_dataset{std::move(ds)};
  });
}

peot_status peot_dataset_split(const peot_dataset* ds, int k, int fold, uint64_t seed, peot_dataset** out_train,
                               peot_dataset** out_test) {
  return guarded([&] {
    need(ds, "dataset");
    need(out_train, "out_train");
    need(out_test, "out_test");
    if (fold < 0 || fold >= k) peot::throw_invalid("fold must lie in [0, k)");
    const auto folds = peot::make_folds(ds->data, k, seed);
    peot::FoldSplit split = peot::split_fold(ds->data, folds, static_cast<std::size_t>(fold));
    auto train = std::make_unique<peot_dataset>(peot_dataset{std::move(split.train)});
    *out_test = new peot_dataset{std::move(split.test)};
    *out_train = train.release();
  });
}

peot_status peot_dataset_rows(const peot_dataset* ds, size_t* rows, size_t* cols) {
  return guarded([&] {
    need(ds, "dataset");
    if (rows) *rows = ds->data.size();
    if (cols) *cols = ds->data.num_features();
  });
}

peot_status peot_dataset_labels(const peot_dataset* ds, int* out_labels, size_t n) {
  return guarded([&] {
    need(ds, "dataset");
    need(out_labels, "out_labels");
    if (n != ds->data.size()) peot::throw_invalid("label buffer size does not match the dataset");
    std::copy(ds->data.labels.begin(), ds->data.labels.end(), out_labels);
  });
}

peot_status peot_tree_train(const peot_dataset* train, const char* config_json, peot_tree** out) {
  return guarded([&] {
    need(train, "dataset");
    need(out, "out");
    const auto cfg = config_from(config_json, peot::TrainConfig{});
    *out = new peot_tree{peot::train(train->data, cfg)};
  });
}

peot_status peot_tree_load(const char* path, peot_tree** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new peot_tree{peot::tree_from_json(load_json_file(path))};
  });
}

peot_status peot_tree_save(const peot_tree* tree, const char* path) {
  return guarded([&] {
    need(tree, "tree");
    need(path, "path");
    peot::write_text_file(path, peot::dump_model(peot::tree_to_json(tree->tree)));
  });
}

void peot_tree_free(peot_tree* tree) { delete tree; }

peot_status peot_tree_predict(const peot_tree* tree, const peot_dataset* ds, int* out_labels, size_t n) {
  return guarded([&] {
    need(tree, "tree");
    need(ds, "dataset");
    need(out_labels, "out_labels");
    if (n != ds->data.size()) peot::throw_invalid("label buffer size does not match the dataset");
    const auto pred = peot::predict_labels(tree->tree, ds->data.features);
    std::copy(pred.begin(), pred.end(), out_labels);
  });
}

peot_status peot_tree_predict_soft(const peot_tree* tree, const double* x, size_t num_features, double* out_probs,
                                   size_t num_classes) {
  return guarded([&] {
    need(tree, "tree");
    need(x, "x");
    need(out_probs, "out_probs");
    if (num_classes != static_cast<size_t>(tree->tree.shape().num_classes))
      peot::throw_invalid("probability buffer size does not match the class count");
    const auto p = peot::predict_soft(tree->tree, {x, num_features});
    std::copy(p.begin(), p.end(), out_probs);
  });
}

peot_status peot_tree_compress(peot_tree* tree, const peot_dataset* train, const peot_dataset* eval,
                               const char* config_json, char** out_report_json) {
  return guarded([&] {
    need(tree, "tree");
    need(train, "dataset");
    const auto cfg = config_from(config_json, peot::CompressConfig{});
    peot::CompressResult r = peot::compress_pipeline(tree->tree, train->data, eval ? &eval->data : nullptr, cfg);
    json report = r.report.to_json();
    report["touch_accounting"] = {{"internal_only", peot::touch_accounting_name(peot::TouchAccounting::InternalOnly)},
                                  {"with_leaves", peot::touch_accounting_name(peot::TouchAccounting::WithLeaves)}};
    set_string(out_report_json, report.dump(2));
    tree->tree = std::move(r.tree);
  });
}

peot_status peot_tree_evaluate(const peot_tree* tree, const peot_dataset* ds, char** out_json) {
  return guarded([&] {
    need(tree, "tree");
    need(ds, "dataset");
    need(out_json, "out_json");
    *out_json = dup_string(tree_evaluation(tree->tree, ds->data).dump(2));
  });
}

peot_status peot_gbt_train(const peot_dataset* train, const char* config_json, peot_gbt** out) {
  return guarded([&] {
    need(train, "dataset");
    need(out, "out");
    const auto cfg = config_from(config_json, peot::GbtConfig{});
    *out = new peot_gbt{peot::train_gbt(train->data, cfg)};
  });
}

peot_status peot_gbt_quantize(peot_gbt* model, int threshold_bits, int leaf_bits) {
  return guarded([&] {
    need(model, "model");
    model->model = peot::quantize_gbt(model->model, threshold_bits, leaf_bits);
  });
}

peot_status peot_gbt_load(const char* path, peot_gbt** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new peot_gbt{peot::gbt_from_json(load_json_file(path))};
  });
}

peot_status peot_gbt_save(const peot_gbt* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    peot::write_text_file(path, peot::dump_model(peot::gbt_to_json(model->model)));
  });
}

void peot_gbt_free(peot_gbt* model) { delete model; }

peot_status peot_gbt_predict(const peot_gbt* model, const peot_dataset* ds, int* out_labels, size_t n) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(out_labels, "out_labels");
    if (n != ds->data.size()) peot::throw_invalid("label buffer size does not match the dataset");
    const auto pred = peot::predict_gbt_labels(model->model, ds->data.features);
    std::copy(pred.begin(), pred.end(), out_labels);
  });
}

peot_status peot_gbt_evaluate(const peot_gbt* model, const peot_dataset* ds, char** out_json) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(out_json, "out_json");
    *out_json = dup_string(gbt_evaluation(model->model, ds->data).dump(2));
  });
}

peot_status peot_sweep(const peot_dataset* ds, const char* config_json, char** out_csv, char** out_json,
                       char** out_gnuplot) {
  return guarded([&] {
    need(ds, "dataset");
    const auto cfg = config_from(config_json, peot::SweepConfig{});
    const peot::SweepResult r = peot::tradeoff_sweep(ds->data, cfg);
    std::vector<double> lambdas, powers;
    for (const auto& p : r.points)
      if (p.failed_folds == 0) {
        lambdas.push_back(p.lambda);
        powers.push_back(p.mean_power);
      }
    json j = r.to_json();
    j["dataset_fingerprint"] = peot::fingerprint_hex(ds->data.fingerprint());
    j["provenance"] = ds->data.provenance;
    if (lambdas.size() >= 2) j["spearman_lambda_power"] = peot::spearman(lambdas, powers);
    set_string(out_csv, r.to_csv());
    set_string(out_json, j.dump(2));
    set_string(out_gnuplot, r.gnuplot_script("sweep.csv"));
  });
}

peot_status peot_benchmark(const peot_dataset* ds, const char* config_json, char** out_json, char** out_csv) {
  return guarded([&] {
    need(ds, "dataset");
    const auto cfg = config_from(config_json, peot::BenchmarkConfig::defaults());
    const peot::BenchmarkReport r = peot::benchmark_report(ds->data, cfg);
    set_string(out_json, r.to_json().dump(2));
    set_string(out_csv, r.to_csv());
  });
}

peot_status peot_report(const peot_dataset* ds, const char* const* model_paths, size_t n_models, char** out_json,
                        char** out_csv) {
  return guarded([&] {
    need(ds, "dataset");
    need(model_paths, "model_paths");
    if (n_models == 0) peot::throw_invalid("report needs at least one model");
    const auto& d = ds->data;
    std::vector<peot::MethodSummary> rows;
    for (size_t i = 0; i < n_models; ++i) {
      need(model_paths[i], "model path");
      const json doc = load_json_file(model_paths[i]);
      peot::MethodSummary row;
      // CLI runs all write model.json, so the run directory names the method.
      const std::filesystem::path mp(model_paths[i]);
      row.method = mp.stem() == "model" && mp.has_parent_path() && !mp.parent_path().filename().empty()
                       ? mp.parent_path().filename().string()
                       : mp.stem().string();
      json eval;
      if (peot::model_format(doc) == "oblique_tree") {
        const peot::ObliqueTree tree = peot::tree_from_json(doc);
        eval = tree_evaluation(tree, d);
        row.size_accounting = peot::size_accounting_name(peot::SizeAccounting::PrunedShared);
        row.size_bits.push_back(eval["size"]["compressed"]["total_bits"].get<double>());
      } else {
        const peot::GbtModel model = peot::gbt_from_json(doc);
        eval = gbt_evaluation(model, d);
        const char* key = model.quantization.enabled ? "quantized" : "dense";
        row.size_accounting = eval["size"][key]["accounting"].get<std::string>();
        row.size_bits.push_back(eval["size"][key]["total_bits"].get<double>());
      }
      row.f1.push_back(eval["metrics"]["f1"].get<double>());
      row.power.push_back(eval["deployed_power"].get<double>());
      rows.push_back(std::move(row));
    }
    peot::finalize_rows(rows);
    peot::BenchmarkReport report;
    report.provenance = d.provenance;
    report.dataset_fingerprint = peot::fingerprint_hex(d.fingerprint());
    report.rows = std::move(rows);
    report.notes.push_back("sizes and deployed power are normalized to the first model");
    set_string(out_json, report.to_json().dump(2));
    set_string(out_csv, report.to_csv());
  });
}

peot_status peot_default_config(const char* kind, char** out_json) {
  return guarded([&] {
    need(kind, "kind");
    need(out_json, "out_json");
    const std::string k = kind;
    json j;
    if (k == "train")
      j = peot::TrainConfig{};
    else if (k == "compress")
      j = peot::CompressConfig{};
    else if (k == "gbt")
      j = peot::GbtConfig{};
    else if (k == "sweep")
      j = peot::SweepConfig{};
    else if (k == "benchmark")
      j = peot::BenchmarkConfig::defaults();
    else
      peot::throw_invalid("unknown config kind '" + k + "'");
    *out_json = dup_string(j.dump(2));
  });
}

}  // extern "C"
