#include "commands.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sisc/crm.hpp"
#include "sisc/data.hpp"
#include "sisc/error.hpp"
#include "sisc/eval.hpp"
#include "sisc/io.hpp"

namespace sisc::cli {

namespace fs = std::filesystem;

namespace {

const OptionSpec kOut{"out", "", "output directory"};
const OptionSpec kSeed{"seed", "0", "random seed"};

std::vector<OptionSpec> ratio_options() {
  return {{"train_ratio", "0.8", "fraction of nodules for training"},
          {"val_ratio", "0.1", "fraction of nodules for validation"},
          {"test_ratio", "0.1", "fraction of nodules for testing"}};
}

SplitPlan split_plan(const RunConfig& c) {
  return SplitPlan{c.u64("seed"), c.real("train_ratio"), c.real("val_ratio"), c.real("test_ratio")};
}

fs::path output_dir(const RunConfig& c) {
  const fs::path out = c.text("out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out.string());
  return out;
}

std::string counts_line(const std::string& part, const ClassCounts& c) {
  return part + ": benign " + std::to_string(c.benign) + ", malignant " + std::to_string(c.malignant);
}

void write_parts(const fs::path& out, const std::vector<NoduleSample>& train,
                 const std::vector<NoduleSample>& val, const std::vector<NoduleSample>& test) {
  write_shard(out / "train", train);
  write_shard(out / "val", val);
  write_shard(out / "test", test);
}

std::vector<std::size_t> parse_sizes(const std::vector<std::string>& items, const std::string& key) {
  std::vector<std::size_t> out;
  for (const auto& s : items) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || v == 0) throw ConfigError(key + ": '" + s + "' is not a positive integer");
    out.push_back(v);
  }
  return out;
}

SequencerConfig model_config(const RunConfig& c, std::size_t input_size) {
  SequencerConfig config;
  if (c.has("model_config")) {
    config = SequencerConfig::from_text(io::read_text(c.text("model_config")));
    if (config.input_size != input_size) {
      throw DataError("model input size " + std::to_string(config.input_size) +
                      " does not match the data (" + std::to_string(input_size) + ")");
    }
  } else {
    const auto channels = parse_sizes(c.list("channels"), "channels");
    if (channels.empty()) throw ConfigError("channels: at least one cell is needed");
    CellConfig cell;
    cell.kernel = c.size("kernel");
    cell.conv_count = c.size("conv_count");
    config.cells.clear();
    for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
      cell.channels = channels[i];
      config.cells.push_back(cell);
    }
    cell.channels = channels.back();
    cell.conv_count = c.size("final_conv_count");
    config.final_cell = cell;
    config.input_size = input_size;
  }
  const bool all = !c.has("model_config");
  auto tune = [&](CellConfig& cell) {
    if (all || c.explicit_set("dropout")) cell.dropout_rate = c.real("dropout");
    if (all || c.explicit_set("bn_momentum")) cell.bn_momentum = c.real("bn_momentum");
  };
  for (auto& cell : config.cells) tune(cell);
  tune(config.final_cell);
  config.validate();
  return config;
}

std::size_t image_size(const std::vector<NoduleSample>& samples, const std::string& what) {
  if (samples.empty()) throw DataError(what + " holds no samples");
  const Shape& s = samples.front().image.shape();
  if (s.h != s.w) throw DataError(what + " images are not square: " + s.str());
  return s.h;
}

void check_compatible(const SequencerConfig& config, const std::vector<NoduleSample>& samples,
                      const std::string& what) {
  const Shape& s = samples.front().image.shape();
  if (s.c != config.input_channels || s.h != config.input_size || s.w != config.input_size) {
    throw DataError("checkpoint expects " + std::to_string(config.input_channels) + "x" +
                    std::to_string(config.input_size) + "x" + std::to_string(config.input_size) +
                    " images but " + what + " holds " + s.str());
  }
}

std::string history_header() { return "epoch,train_loss,train_accuracy,val_loss,val_accuracy,val_auc\n"; }

std::string history_row(const EpochRecord& r) {
  auto num = [](double v) { return std::isnan(v) ? std::string("NA") : io::format_double(v); };
  return std::to_string(r.epoch) + ',' + num(r.train_loss) + ',' + num(r.train_accuracy) + ',' +
         num(r.val_loss) + ',' + num(r.val_accuracy) + ',' + num(r.val_auc) + '\n';
}

double safe_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || static_cast<std::size_t>(pos) == labels.size()) return std::nan("");
  return roc_auc(scores, labels).auc;
}

std::vector<std::uint8_t> read_mask_pgm(const fs::path& path) {
  const auto img = io::read_pgm(path);
  std::vector<std::uint8_t> mask;
  for (auto p : img.pixels) mask.push_back(p > 0 ? 1 : 0);
  return mask;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<OptionSpec> synth_options() {
  std::vector<OptionSpec> o{{"n", "400", "number of samples (even indices benign)"},
                            kSeed,
                            {"size", "96", "image side in pixels"},
                            kOut};
  for (auto& r : ratio_options()) o.push_back(r);
  return o;
}

void run_synth(const RunConfig& c) {
  const std::size_t size = c.size("size");
  const auto samples = synth_generate(c.size("n"), c.u64("seed"), size);
  const auto parts = split(samples, split_plan(c));
  const fs::path out = output_dir(c);
  c.write_echo(out);
  write_parts(out, select(samples, parts.train), select(samples, parts.val), select(samples, parts.test));

  // Slices plus a single-reader manifest so the set can also go through prepare.
  fs::create_directories(out / "slices");
  std::vector<AnnotationRecord> records;
  for (const auto& s : samples) {
    io::GrayImage img{size, size, 65535, {}};
    for (float v : s.image.data()) img.pixels.push_back(static_cast<std::uint16_t>(std::lround(v * 65535.0f)));
    const std::string name = "slices/" + s.provenance.id + ".pgm";
    io::write_pgm(out / name, img);
    const double mid = static_cast<double>(size / 2);
    records.push_back({name, s.provenance.id, 0, {{"synth", mid, mid, s.score}}});
  }
  io::write_text(out / "manifest.csv", write_manifest(records));

  std::ostringstream os;
  os << counts_line("total", count_labels(samples)) << '\n'
     << counts_line("train", count_labels(select(samples, parts.train))) << '\n'
     << counts_line("val", count_labels(select(samples, parts.val))) << '\n'
     << counts_line("test", count_labels(select(samples, parts.test))) << '\n';
  io::write_text(out / "stats.txt", os.str());
  std::cout << os.str();
}

// ---------------------------------------------------------------------------

std::vector<OptionSpec> prepare_options() {
  std::vector<OptionSpec> o{{"manifest", "", "annotation manifest CSV"},
                            {"variant", "I", "score-3 treatment: I, B or M"},
                            kSeed,
                            {"augment", "none", "training-set augmentation: none, 15k, 30k or 60k"},
                            {"augment_benign", "", "explicit benign training target"},
                            {"augment_malignant", "", "explicit malignant training target"},
                            {"crop_size", "96", "crop side in pixels"},
                            {"dry_run", "false", "count labels and splits without reading images"},
                            kOut};
  for (auto& r : ratio_options()) o.push_back(r);
  return o;
}

void run_prepare(const RunConfig& c) {
  PrepareOptions opt;
  opt.variant = parse_variant(c.text("variant"));
  opt.plan = split_plan(c);
  if (c.text("augment") != "none") opt.augment_size = parse_augment_size(c.text("augment"));
  if (c.has("augment_benign") != c.has("augment_malignant")) {
    throw ConfigError("augment-benign and augment-malignant must be given together");
  }
  if (c.has("augment_benign")) opt.augment_target = ClassCounts{c.size("augment_benign"), c.size("augment_malignant")};
  opt.crop_size = c.size("crop_size");
  opt.dry_run = c.flag("dry_run");

  const fs::path manifest = c.text("manifest");
  const auto records = parse_manifest(io::read_text(manifest), manifest.parent_path(), !opt.dry_run);
  const auto prepared = prepare_from_manifest(records, manifest.parent_path(), opt);
  const fs::path out = output_dir(c);
  c.write_echo(out);
  if (!opt.dry_run) write_parts(out, prepared.train, prepared.val, prepared.test);
  const std::string report = prepared.stats.report();
  io::write_text(out / "stats.txt", report);
  std::cout << report;
}

// ---------------------------------------------------------------------------

std::vector<OptionSpec> train_options() {
  return {{"data", "", "directory holding train and val shards"},
          {"model_config", "", "sequencer configuration file (overrides the layout flags)"},
          {"channels", "16,32,64,128", "channels per cell; the last entry is the unpooled cell"},
          {"conv_count", "3", "conv stages per pooled cell"},
          {"final_conv_count", "1", "conv stages in the unpooled cell"},
          {"kernel", "3", "convolution kernel size"},
          {"dropout", "0.25", "dropout rate in every stage"},
          {"bn_momentum", "0.99", "batchnorm running-statistics momentum"},
          {"epochs", "30", "training epochs"},
          {"batch_size", "128", "minibatch size"},
          {"lr", "1e-5", "Adam learning rate"},
          kSeed,
          kOut};
}

void run_train(const RunConfig& c) {
  const fs::path data = c.text("data");
  const auto train_samples = read_shard(data / "train");
  const auto val_samples = read_shard(data / "val");
  const SequencerConfig config = model_config(c, image_size(train_samples, "training set"));
  check_compatible(config, val_samples.empty() ? train_samples : val_samples, "the validation set");
  const TrainSchedule schedule{c.size("epochs"), c.size("batch_size"), c.real("lr"), c.u64("seed")};
  if (schedule.epochs == 0 || schedule.batch_size == 0) throw ConfigError("epochs and batch-size must be positive");

  const fs::path out = output_dir(c);
  c.write_echo(out);
  io::write_text(out / "model.txt", config.to_text());
  std::ofstream history(out / "history.csv", std::ios::binary | std::ios::trunc);
  if (!history) throw IoError("cannot write " + (out / "history.csv").string());
  history << history_header() << std::flush;

  Rng rng(schedule.seed);
  auto model = build_sequencer<float>(config, rng);
  std::cout << "parameters = " << parameter_count(config) << '\n';
  const auto result = train(std::move(model), to_labeled(train_samples), to_labeled(val_samples), schedule,
                            [&](const EpochRecord& r) {
                              history << history_row(r) << std::flush;
                              std::cout << "epoch " << r.epoch << ": train_loss "
                                        << io::format_double(r.train_loss) << " val_accuracy "
                                        << io::format_double(r.val_accuracy) << std::endl;
                            });
  save_checkpoint(result.best, out / "best.ckpt");
  save_checkpoint(result.last, out / "last.ckpt");
  const auto& best = result.history.at(result.best_epoch - 1);
  std::cout << "best_epoch = " << result.best_epoch << '\n'
            << "best_val_accuracy = " << io::format_double(best.val_accuracy) << '\n';
}

// ---------------------------------------------------------------------------

std::vector<OptionSpec> eval_options() {
  return {{"checkpoint", "", "checkpoint file"},
          {"data", "", "prepared dataset directory"},
          {"part", "test", "dataset part to score: train, val or test"},
          {"shard", "", "shard prefix (instead of data and part)"},
          {"folds", "0", "split the scored set into this many stratified folds (0: one row)"},
          {"batch_size", "128", "inference batch size"},
          kSeed,
          kOut};
}

void run_eval(const RunConfig& c) {
  const auto model = load_checkpoint(c.text("checkpoint"));
  fs::path prefix;
  if (c.has("shard")) {
    prefix = c.text("shard");
  } else {
    const std::string part = c.text("part");
    if (part != "train" && part != "val" && part != "test") {
      throw ConfigError("part: '" + part + "' is not one of train, val, test");
    }
    prefix = fs::path(c.text("data")) / part;
  }
  const auto samples = read_shard(prefix);
  if (samples.empty()) throw DataError(prefix.string() + " holds no samples");
  check_compatible(model.config, samples, prefix.string());
  const auto set = to_labeled(samples);
  const Evaluation ev = evaluate(model, set, c.size("batch_size"));

  std::vector<FoldMetrics> rows;
  const std::size_t k = c.size("folds");
  if (k == 1) throw ConfigError("folds: use 0 for a single row or at least 2");
  auto row_for = [&](const std::string& name, const std::vector<std::size_t>& idx) {
    std::vector<int> pred, truth;
    std::vector<double> scores;
    for (std::size_t i : idx) {
      pred.push_back(ev.predicted[i]);
      truth.push_back(set.labels[i]);
      scores.push_back(ev.positive_scores[i]);
    }
    return FoldMetrics{name, metrics(confusion(pred, truth)), safe_auc(scores, truth)};
  };
  if (k == 0) {
    std::vector<std::size_t> all(samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rows.push_back(row_for("all", all));
  } else {
    const auto folds = kfold(samples, k, c.u64("seed"));
    for (std::size_t f = 0; f < folds.size(); ++f) rows.push_back(row_for(std::to_string(f), folds[f]));
  }

  const fs::path out = output_dir(c);
  c.write_echo(out);
  const std::string report = metrics_report_csv(rows);
  io::write_text(out / "metrics.csv", report);
  if (!std::isnan(safe_auc(ev.positive_scores, set.labels))) {
    io::write_text(out / "roc.csv", roc_csv(roc_auc(ev.positive_scores, set.labels)));
  }
  std::ostringstream preds;
  preds << "id,label,predicted,malignant_probability\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    preds << samples[i].provenance.id << ',' << set.labels[i] << ',' << ev.predicted[i] << ','
          << io::format_double(ev.positive_scores[i]) << '\n';
  }
  io::write_text(out / "predictions.csv", preds.str());
  std::cout << "# accuracy, sensitivity, specificity, auc; summary row is mean±sample std in percent\n"
            << report;
}

// ---------------------------------------------------------------------------

std::vector<OptionSpec> explain_options() {
  return {{"checkpoint", "", "checkpoint file"},
          {"image", "", "input image (binary PGM); min-max normalized before use"},
          {"mask", "", "ground-truth region (binary PGM, nonzero inside)"},
          {"shard", "", "shard prefix to take the image (and mask) from"},
          {"index", "0", "sample index within the shard"},
          {"class", "", "comma-separated class ids to explain (default: all)"},
          {"crm_variant", "literal", "ReLU rule while back-projecting: literal, deconvnet or guided"},
          {"render", "signed", "PGM rendering: signed or magnitude"},
          kOut};
}

void run_explain(const RunConfig& c) {
  const fs::path checkpoint = c.text("checkpoint");
  const auto bytes = io::read_file(checkpoint);
  const auto model = decode_checkpoint(bytes);
  const std::string checkpoint_id = io::hex32(checkpoint_identity(bytes));
  const CrmVariant variant = parse_crm_variant(c.text("crm_variant"));
  const std::string render = c.text("render");
  if (render != "signed" && render != "magnitude") throw ConfigError("render: '" + render + "' is not signed or magnitude");
  const RenderMode mode = render == "signed" ? RenderMode::signed_map : RenderMode::magnitude;

  Tensor<float> image;
  std::optional<std::vector<std::uint8_t>> mask;
  if (c.has("image") == c.has("shard")) throw ConfigError("give exactly one of --image and --shard");
  if (c.has("image")) {
    image = minmax_normalize(load_slice(c.text("image")));
  } else {
    const auto samples = read_shard(c.text("shard"));
    const std::size_t index = c.size("index");
    if (index >= samples.size()) {
      throw DataError("index " + std::to_string(index) + " outside a shard of " + std::to_string(samples.size()));
    }
    image = samples[index].image;
    mask = samples[index].mask;
  }
  if (c.has("mask")) mask = read_mask_pgm(c.text("mask"));
  const Shape& s = image.shape();
  if (s.h != model.config.input_size || s.w != model.config.input_size) {
    throw DataError("image is " + std::to_string(s.h) + "x" + std::to_string(s.w) + " but the model expects " +
                    std::to_string(model.config.input_size) + "x" + std::to_string(model.config.input_size));
  }

  std::vector<int> classes;
  for (const auto& item : c.list("class")) {
    std::size_t pos = 0;
    int v = -1;
    try {
      v = std::stoi(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v < 0 || static_cast<std::size_t>(v) >= model.config.class_count) {
      throw ConfigError("class: '" + item + "' is not a class of this " +
                        std::to_string(model.config.class_count) + "-class model");
    }
    classes.push_back(v);
  }
  if (classes.empty()) {
    for (std::size_t k = 0; k < model.config.class_count; ++k) classes.push_back(static_cast<int>(k));
  }

  const auto fwd = forward(model, image);
  std::vector<double> probs(fwd.probs.data().begin(), fwd.probs.data().end());
  const Prediction p = argmax_prediction(probs);
  const fs::path out = output_dir(c);
  c.write_echo(out);
  std::cout << "class " << p.class_id << " p=" << io::format_double(p.probability) << '\n';
  for (int k : classes) {
    auto crm = crm_from_trace(model, fwd.trace, k, variant);
    crm.checkpoint_id = checkpoint_id;
    const fs::path stem = out / ("crm_class" + std::to_string(k));
    export_map(crm, render_map(crm.map, mode), stem);
    io::write_file(fs::path(stem).concat(".crm"), encode_raw_map(crm.map));
    if (mask) {
      std::cout << "localization_score class " << k << " = "
                << io::format_double(localization_score(crm.map, *mask)) << '\n';
    }
  }
}

}  // namespace sisc::cli
