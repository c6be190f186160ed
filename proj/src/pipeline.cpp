#include "docsynth/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "docsynth/datasynth.hpp"
#include "docsynth/fusion.hpp"
#include "docsynth/hash.hpp"
#include "docsynth/inference.hpp"
#include "docsynth/metrics.hpp"
#include "docsynth/parallel.hpp"
#include "docsynth/png_io.hpp"

namespace docsynth {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

GenSeed family(std::uint64_t seed, std::string_view purpose) {
  return GenSeed{splitmix64(seed ^ fnv1a64(purpose))};
}

std::string numbered(const char* prefix, std::size_t i, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%0*zu", prefix, digits, i);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_validation("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const ordered_json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

void log_stage(std::string_view stage, const std::string& message) {
  std::cerr << "[" << stage << "] " << message << "\n";
}

std::string rel(const fs::path& root, const fs::path& p) { return p.lexically_relative(root).generic_string(); }

// Reads the members of one JSON object, rejecting keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string name) : name_(std::move(name)) {
    if (j.is_null()) return;
    if (!j.is_object()) fail_validation("config section '" + name_ + "' must be an object");
    j_ = &j;
  }
  ~Section() noexcept(false) {
    if (!j_ || std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_->items())
      if (!seen_.count(key)) fail_validation("unknown config key '" + name_ + "." + key + "'");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_ || !j_->contains(key)) return;
    try {
      out = j_->at(key).get<T>();
    } catch (const json::exception& e) {
      fail_validation("config key '" + name_ + "." + key + "': " + e.what());
    }
  }
  const json& child(const std::string& key) {
    seen_.insert(key);
    static const json null;
    return j_ && j_->contains(key) ? j_->at(key) : null;
  }

 private:
  std::string name_;
  const json* j_ = nullptr;
  std::set<std::string> seen_;
};

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

ordered_json params_json(const InferenceParams& p) {
  return {{"overlap_factor", p.overlap_factor},
          {"min_confidence", p.post.min_confidence},
          {"min_contour_area", p.post.min_contour_area}};
}

}  // namespace

// ---------------------------------------------------------------------------
// config

void PipelineConfig::validate() const {
  generator.validate();
  require(corpus_patches >= 1, "corpus must hold at least one patch");
  require(kmeans.k >= 1 && kmeans.max_iter >= 1 && kmeans.tol >= 0.0 && kmeans.restarts >= 1,
          "invalid clustering options");
  require(samples_per_layer >= static_cast<std::size_t>(kmeans.k), "pixel budget must be >= k");
  require(max_stacks >= 1, "max_stacks must be >= 1");
  require(dataset_patches >= 1, "dataset must hold at least one patch");
  require(background_fraction >= 0.0 && background_fraction <= 1.0, "background_fraction must be in [0, 1]");
  augment.validate();
  train.validate();
  require(grid_documents >= 1 && eval_documents >= 1, "document counts must be >= 1");
  require(document_size >= kPatchSize, "document size must be >= 256");
  grid.validate();
  inference.validate();
}

ordered_json config_to_json(const PipelineConfig& c) {
  const auto& g = c.generator;
  const auto& a = c.augment;
  const auto& t = c.train;
  return {
      {"seed", c.seed},
      {"generator",
       {{"printed_density", g.printed_density},
        {"handwriting_probability", g.handwriting_probability},
        {"feature_noise_sigma", g.feature_noise_sigma},
        {"background_texture_level", g.background_texture_level}}},
      {"corpus", {{"patches", c.corpus_patches}}},
      {"clustering",
       {{"k", c.kmeans.k},
        {"max_iter", c.kmeans.max_iter},
        {"tol", c.kmeans.tol},
        {"restarts", c.kmeans.restarts},
        {"samples_per_layer", c.samples_per_layer},
        {"max_stacks", c.max_stacks}}},
      {"dataset",
       {{"patches", c.dataset_patches},
        {"min_class_pixels", c.min_class_pixels},
        {"background_fraction", c.background_fraction}}},
      {"augment",
       {{"op_probability", a.op_probability},
        {"inversion_probability", a.inversion_probability},
        {"max_rotation_deg", a.max_rotation_deg},
        {"max_shear", a.max_shear},
        {"max_shift_fraction", a.max_shift_fraction},
        {"min_crop_scale", a.min_crop_scale},
        {"distortion_grid", a.distortion_grid},
        {"max_distortion_px", a.max_distortion_px},
        {"min_contrast", a.min_contrast},
        {"max_contrast", a.max_contrast}}},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"iterations", t.iterations},
        {"batch_size", t.batch_size},
        {"hidden_width", t.hidden_width},
        {"pool_size", t.pool_size},
        {"refresh_interval", t.refresh_interval},
        {"window", t.features.window},
        {"box_sides", t.features.box_sides}}},
      {"documents", {{"grid", c.grid_documents}, {"test", c.eval_documents}, {"size", c.document_size}}},
      {"grid",
       {{"overlap_factors", c.grid.overlap_factors},
        {"min_confidences", c.grid.min_confidences},
        {"min_contour_areas", c.grid.min_contour_areas}}},
      {"inference", params_json(c.inference)},
      {"preview", {{"patches", c.preview_patches}}},
  };
}

PipelineConfig config_from_json(const json& j, PipelineConfig c) {
  {
    Section root(j, "config");
    root.get("seed", c.seed);
    {
      Section s(root.child("generator"), "generator");
      s.get("printed_density", c.generator.printed_density);
      s.get("handwriting_probability", c.generator.handwriting_probability);
      s.get("feature_noise_sigma", c.generator.feature_noise_sigma);
      s.get("background_texture_level", c.generator.background_texture_level);
    }
    {
      Section s(root.child("corpus"), "corpus");
      s.get("patches", c.corpus_patches);
    }
    {
      Section s(root.child("clustering"), "clustering");
      s.get("k", c.kmeans.k);
      s.get("max_iter", c.kmeans.max_iter);
      s.get("tol", c.kmeans.tol);
      s.get("restarts", c.kmeans.restarts);
      s.get("samples_per_layer", c.samples_per_layer);
      s.get("max_stacks", c.max_stacks);
    }
    {
      Section s(root.child("dataset"), "dataset");
      s.get("patches", c.dataset_patches);
      s.get("min_class_pixels", c.min_class_pixels);
      s.get("background_fraction", c.background_fraction);
    }
    {
      Section s(root.child("augment"), "augment");
      auto& a = c.augment;
      s.get("op_probability", a.op_probability);
      s.get("inversion_probability", a.inversion_probability);
      s.get("max_rotation_deg", a.max_rotation_deg);
      s.get("max_shear", a.max_shear);
      s.get("max_shift_fraction", a.max_shift_fraction);
      s.get("min_crop_scale", a.min_crop_scale);
      s.get("distortion_grid", a.distortion_grid);
      s.get("max_distortion_px", a.max_distortion_px);
      s.get("min_contrast", a.min_contrast);
      s.get("max_contrast", a.max_contrast);
    }
    {
      Section s(root.child("train"), "train");
      auto& t = c.train;
      s.get("learning_rate", t.learning_rate);
      s.get("iterations", t.iterations);
      s.get("batch_size", t.batch_size);
      s.get("hidden_width", t.hidden_width);
      s.get("pool_size", t.pool_size);
      s.get("refresh_interval", t.refresh_interval);
      s.get("window", t.features.window);
      s.get("box_sides", t.features.box_sides);
    }
    {
      Section s(root.child("documents"), "documents");
      s.get("grid", c.grid_documents);
      s.get("test", c.eval_documents);
      s.get("size", c.document_size);
    }
    {
      Section s(root.child("grid"), "grid");
      s.get("overlap_factors", c.grid.overlap_factors);
      s.get("min_confidences", c.grid.min_confidences);
      s.get("min_contour_areas", c.grid.min_contour_areas);
    }
    {
      Section s(root.child("inference"), "inference");
      s.get("overlap_factor", c.inference.overlap_factor);
      s.get("min_confidence", c.inference.post.min_confidence);
      s.get("min_contour_area", c.inference.post.min_contour_area);
    }
    {
      Section s(root.child("preview"), "preview");
      s.get("patches", c.preview_patches);
    }
  }
  return c;
}

PipelineConfig load_config(const fs::path& path, PipelineConfig base) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail_validation("malformed config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

// ---------------------------------------------------------------------------
// run directory and provenance

fs::path RunDir::corpus_image(std::size_t i) const { return corpus() / "images" / (numbered("patch", i) + ".png"); }
fs::path RunDir::corpus_label(std::size_t i) const { return corpus() / "labels" / (numbered("label", i) + ".png"); }
fs::path RunDir::corpus_stack(std::size_t i) const {
  return corpus() / "features" / (numbered("stack", i) + ".fstk");
}
fs::path RunDir::cluster_model(int layer) const { return clusters() / ("layer_" + std::to_string(layer) + ".json"); }
fs::path RunDir::provenance(const std::string& command) const { return root / "provenance" / (command + ".json"); }

fs::path resolve_run_dir(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("DOCSYNTH_RUN_DIR"); env && *env) return env;
  return "run";
}

std::map<std::string, std::string> hash_tree(const fs::path& root, const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (fs::is_regular_file(dir)) {
    out[rel(root, dir)] = sha256_file(dir);
    return out;
  }
  require(fs::is_directory(dir), "missing input " + dir.string());
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[rel(root, e.path())] = sha256_file(e.path());
  return out;
}

void write_provenance(const RunDir& run, const std::string& command, const PipelineConfig& config,
                      const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  const auto table = [&](const std::vector<fs::path>& paths) {
    ordered_json j = ordered_json::object();
    for (const auto& p : paths)
      for (const auto& [name, digest] : hash_tree(run.root, p)) j[name] = digest;
    return j;
  };
  ordered_json j{{"command", command},
                 {"tool_version", kToolVersion},
                 {"config", config_to_json(config)},
                 {"inputs", table(inputs)},
                 {"outputs", table(outputs)}};
  fs::create_directories(run.provenance(command).parent_path());
  write_json(run.provenance(command), j);
}

// ---------------------------------------------------------------------------
// stages

void gen_corpus(const RunDir& run, const PipelineConfig& config) {
  config.validate();
  for (const char* sub : {"images", "labels", "features"}) fs::create_directories(run.corpus() / sub);
  const GenSeed base = family(config.seed, "corpus");
  ordered_json entries = ordered_json::array();
  std::vector<ordered_json> slots(config.corpus_patches);
  parallel_for(config.corpus_patches, [&](std::size_t i) {
    const GenSeed s = derive_seed(base, i);
    const auto patch = generate_patch(s, config.generator);
    write_png(run.corpus_image(i), patch.image);
    write_png(run.corpus_label(i), patch.labels);
    write_feature_stack(run.corpus_stack(i), patch.features);
    slots[i] = {{"seed", s.value},
                {"image", rel(run.corpus(), run.corpus_image(i))},
                {"labels", rel(run.corpus(), run.corpus_label(i))},
                {"features", rel(run.corpus(), run.corpus_stack(i))}};
  });
  for (auto& s : slots) entries.push_back(std::move(s));
  write_json(run.corpus_manifest(), {{"seed", base.value}, {"patches", entries}});
  log_stage("gen-corpus", std::to_string(config.corpus_patches) + " patches");
  write_provenance(run, "gen-corpus", config, {}, {run.corpus()});
}

namespace {

std::size_t corpus_size(const RunDir& run) {
  if (!fs::exists(run.corpus_manifest())) fail_validation("no corpus in " + run.root.string() + "; run gen-corpus");
  try {
    return json::parse(read_text(run.corpus_manifest())).at("patches").size();
  } catch (const json::exception& e) {
    fail_validation(std::string("malformed corpus manifest: ") + e.what());
  }
}

std::vector<AssignmentMap> assign_all(const FeatureStack& stack, const std::vector<ClusterModel>& models) {
  require(stack.layers.size() == models.size(), "feature stack and cluster models disagree on layer count");
  std::vector<AssignmentMap> maps;
  for (std::size_t l = 0; l < models.size(); ++l) maps.push_back(assign(models[l], stack.layers[l]));
  return maps;
}

}  // namespace

std::vector<ClusterModel> fit_clusters(const RunDir& run, const PipelineConfig& config) {
  config.validate();
  const std::size_t n = std::min(corpus_size(run), config.max_stacks);
  std::vector<FeatureStack> stacks(n);
  parallel_for(n, [&](std::size_t i) { stacks[i] = read_feature_stack(run.corpus_stack(i)); });
  auto models = fit_layer_models(stacks, config.kmeans, config.samples_per_layer, family(config.seed, "clustering"),
                                 config.max_stacks);
  fs::create_directories(run.clusters());
  for (const auto& m : models) save_cluster_model(run.cluster_model(m.layer_id), m);
  log_stage("fit-clusters", std::to_string(models.size()) + " layer models from " + std::to_string(n) + " stacks");
  std::vector<fs::path> inputs;
  for (std::size_t i = 0; i < n; ++i) inputs.push_back(run.corpus_stack(i));
  write_provenance(run, "fit-clusters", config, inputs, {run.clusters()});
  return models;
}

std::vector<ClusterModel> load_cluster_models(const RunDir& run) {
  std::vector<ClusterModel> models;
  for (int l = 0; l < kFeatureLayerCount; ++l) {
    if (!fs::exists(run.cluster_model(l)))
      fail_validation("no cluster model for layer " + std::to_string(l) + " in " + run.clusters().string() +
                      "; run fit-clusters");
    models.push_back(load_cluster_model(run.cluster_model(l)));
  }
  return models;
}

ClusterCatalog write_oracle_catalog(const RunDir& run, const PipelineConfig& config) {
  const auto models = load_cluster_models(run);
  const std::size_t n = std::min(corpus_size(run), config.max_stacks);
  std::vector<std::vector<AssignmentMap>> maps(n);
  std::vector<LabelImage> truths(n);
  parallel_for(n, [&](std::size_t i) {
    maps[i] = assign_all(read_feature_stack(run.corpus_stack(i)), models);
    truths[i] = read_label_png(run.corpus_label(i));
  });
  auto catalog = build_oracle_catalog(maps, truths);
  const auto report = validate_catalog(catalog, models);
  if (!report.ok()) fail_runtime("oracle catalog failed validation: " + report.summary());
  save_catalog(run.catalog(), catalog);
  log_stage("annotate", "oracle catalog from " + std::to_string(n) + " patches");
  std::vector<fs::path> inputs{run.clusters()};
  for (std::size_t i = 0; i < n; ++i) {
    inputs.push_back(run.corpus_stack(i));
    inputs.push_back(run.corpus_label(i));
  }
  write_provenance(run, "annotate", config, inputs, {run.catalog()});
  return catalog;
}

AnnotationData load_annotation_data(const RunDir& run, const PipelineConfig& config) {
  AnnotationData data;
  data.models = load_cluster_models(run);
  const std::size_t n = std::min<std::size_t>({corpus_size(run), config.max_stacks, 100});
  data.patches.resize(n);
  data.maps.resize(n);
  parallel_for(n, [&](std::size_t i) {
    data.patches[i] = read_rgb_png(run.corpus_image(i));
    data.maps[i] = assign_all(read_feature_stack(run.corpus_stack(i)), data.models);
  });
  data.catalog_path = run.catalog();
  return data;
}

namespace {

ClusterCatalog load_valid_catalog(const RunDir& run, const std::vector<ClusterModel>& models) {
  if (!fs::exists(run.catalog())) fail_validation("no catalog at " + run.catalog().string() + "; run annotate");
  auto catalog = load_catalog(run.catalog());
  const auto report = validate_catalog(catalog, models);
  if (!report.ok()) fail_validation("invalid catalog: " + report.summary());
  return catalog;
}

}  // namespace

double fuse_preview(const RunDir& run, const PipelineConfig& config) {
  const auto models = load_cluster_models(run);
  const auto catalog = load_valid_catalog(run, models);
  const std::size_t n = std::min(corpus_size(run), config.preview_patches);
  require(n >= 1, "nothing to preview");
  fs::create_directories(run.preview());
  std::vector<std::size_t> agree(n, 0);
  std::vector<ordered_json> rows(n);
  parallel_for(n, [&](std::size_t i) {
    const auto stack = read_feature_stack(run.corpus_stack(i));
    const auto fused = fuse_labels(assign_catalog_layers(stack, models, catalog), catalog);
    const auto truth = read_label_png(run.corpus_label(i));
    require(fused.same_shape(truth), "fused labels and corpus labels differ in size");
    const auto a = fused.pixels(), b = truth.pixels();
    for (std::size_t p = 0; p < a.size(); ++p) agree[i] += a[p] == b[p];
    write_png(run.preview() / (numbered("fused", i) + ".png"), fused);
    write_png(run.preview() / (numbered("fused", i) + "_color.png"), colorize(fused));
    rows[i] = {{"patch", i}, {"agreement", static_cast<double>(agree[i]) / static_cast<double>(a.size())}};
  });
  std::size_t total = 0, pixels = 0;
  ordered_json per_patch = ordered_json::array();
  for (std::size_t i = 0; i < n; ++i) {
    total += agree[i];
    pixels += static_cast<std::size_t>(kPatchSize) * kPatchSize;
    per_patch.push_back(std::move(rows[i]));
  }
  const double agreement = static_cast<double>(total) / static_cast<double>(pixels);
  write_json(run.preview() / "summary.json", {{"patches", n}, {"agreement", agreement}, {"per_patch", per_patch}});
  log_stage("fuse-preview", std::to_string(n) + " patches, agreement with generator truth " + std::to_string(agreement));
  std::vector<fs::path> inputs{run.clusters(), run.catalog()};
  for (std::size_t i = 0; i < n; ++i) inputs.push_back(run.corpus_stack(i));
  write_provenance(run, "fuse-preview", config, inputs, {run.preview()});
  return agreement;
}

DatasetManifest synth_dataset(const RunDir& run, const PipelineConfig& config) {
  config.validate();
  const auto models = load_cluster_models(run);
  const auto catalog = load_valid_catalog(run, models);
  const auto raw = synthesize_dataset(config.dataset_patches, family(config.seed, "dataset"), config.generator, models,
                                      catalog, run.dataset(), {config.min_class_pixels});
  auto balanced = balance(raw, family(config.seed, "balance"), config.background_fraction);
  save_manifest(run.balanced_manifest(), balanced);
  log_stage("synth-dataset", std::to_string(raw.entries.size()) + " synthesized, " +
                                 std::to_string(balanced.entries.size()) + " after balancing (" +
                                 std::to_string(balanced.count(PatchCategory::HandwritingContaining)) + " handwriting, " +
                                 std::to_string(balanced.count(PatchCategory::PrintedOnly)) + " printed, " +
                                 std::to_string(balanced.count(PatchCategory::BackgroundOnly)) + " background)");
  write_provenance(run, "synth-dataset", config, {run.clusters(), run.catalog()}, {run.dataset()});
  return balanced;
}

SegModel train_segmenter(const RunDir& run, const PipelineConfig& config) {
  config.validate();
  if (!fs::exists(run.balanced_manifest()))
    fail_validation("no balanced dataset at " + run.balanced_manifest().string() + "; run synth-dataset");
  const auto manifest = load_manifest(run.balanced_manifest());
  TrainConfig train_config = config.train;
  train_config.seed = family(config.seed, "train").value;
  auto model = train(manifest, train_config, config.augment);
  fs::create_directories(run.model().parent_path());
  save_model(run.model(), model);
  log_stage("train", std::to_string(config.train.iterations) + " iterations on " +
                         std::to_string(manifest.entries.size()) + " patches, final loss " +
                         std::to_string(model.meta.final_loss));
  write_provenance(run, "train", config, {run.dataset()}, {run.model().parent_path()});
  return model;
}

void write_documents(const RunDir& run, const PipelineConfig& config, const std::string& split, std::size_t count) {
  config.validate();
  const fs::path dir = run.documents(split);
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "truth");
  const GenSeed base = family(config.seed, "documents." + split);
  parallel_for(count, [&](std::size_t i) {
    const auto doc = generate_document(derive_seed(base, i), config.generator, config.document_size,
                                       config.document_size);
    const std::string name = numbered("doc", i, 3) + ".png";
    write_png(dir / "images" / name, doc.image);
    write_png(dir / "truth" / name, doc.labels);
  });
  log_stage("documents", std::to_string(count) + " " + split + " documents");
}

std::vector<EvalDocument> load_documents(const RunDir& run, const std::string& split) {
  const fs::path dir = run.documents(split);
  if (!fs::is_directory(dir / "images")) fail_validation("no " + split + " documents in " + dir.string());
  const auto images = sorted_pngs(dir / "images");
  require(!images.empty(), "no " + split + " documents in " + dir.string());
  std::vector<EvalDocument> docs(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    docs[i].image = to_grayscale(read_rgb_png(images[i]));
    docs[i].truth = read_label_png(dir / "truth" / images[i].filename());
    require(docs[i].image.same_shape(docs[i].truth), "document and truth sizes differ: " + images[i].string());
  });
  return docs;
}

GridSearchResult run_grid_search(const RunDir& run, const PipelineConfig& config) {
  config.validate();
  if (!fs::exists(run.model())) fail_validation("no model at " + run.model().string() + "; run train");
  if (!fs::is_directory(run.documents("grid"))) write_documents(run, config, "grid", config.grid_documents);
  const auto model = load_model(run.model());
  const auto docs = load_documents(run, "grid");
  const auto result = grid_search(model, docs, config.grid);
  fs::create_directories(run.grid());
  write_json(run.grid() / "results.json", grid_result_to_json(result));
  write_file_atomic(run.grid() / "results.txt", grid_table(result));
  write_json(run.grid() / "best.json", params_json(result.best));
  log_stage("grid-search", std::to_string(result.table.size()) + " configurations, best mIoU " +
                               std::to_string(result.best_metrics.miou));
  write_provenance(run, "grid-search", config, {run.model().parent_path(), run.documents("grid")}, {run.grid()});
  return result;
}

InferenceParams selected_params(const RunDir& run, const PipelineConfig& config) {
  const fs::path best = run.grid() / "best.json";
  if (!fs::exists(best)) return config.inference;
  InferenceParams p;
  try {
    const auto j = json::parse(read_text(best));
    p.overlap_factor = j.at("overlap_factor").get<double>();
    p.post.min_confidence = j.at("min_confidence").get<double>();
    p.post.min_contour_area = j.at("min_contour_area").get<int>();
  } catch (const json::exception& e) {
    fail_validation("malformed " + best.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

void infer_file(const SegModel& model, const fs::path& input, const fs::path& output, const InferenceParams& params) {
  const auto labels = segment_document(model, read_rgb_png(input), params);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  write_png(output, labels);
  auto color = output;
  color.replace_extension();
  color += "_color.png";
  write_png(color, colorize(labels));
}

void predict_split(const RunDir& run, const std::string& split, const InferenceParams& params) {
  params.validate();
  if (!fs::exists(run.model())) fail_validation("no model at " + run.model().string() + "; run train");
  const auto model = load_model(run.model());
  const auto images = sorted_pngs(run.documents(split) / "images");
  require(!images.empty(), "no " + split + " documents to segment");
  const fs::path out = run.eval() / "predictions";
  const fs::path vis = run.eval() / "visual";
  fs::create_directories(out);
  fs::create_directories(vis);
  for (const auto& img : images) {
    const auto labels = segment_document(model, read_rgb_png(img), params);
    write_png(out / img.filename(), labels);
    write_png(vis / img.filename(), colorize(labels));
  }
  log_stage("infer", std::to_string(images.size()) + " " + split + " documents");
}

MetricsReport evaluate_paths(const fs::path& predictions, const fs::path& truths, const fs::path& out_dir) {
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_regular_file(predictions) && fs::is_regular_file(truths)) {
    pairs.emplace_back(predictions, truths);
  } else if (fs::is_directory(predictions) && fs::is_directory(truths)) {
    for (const auto& t : sorted_pngs(truths)) {
      const auto p = predictions / t.filename();
      if (!fs::exists(p)) fail_validation("missing prediction " + p.string());
      pairs.emplace_back(p, t);
    }
    require(!pairs.empty(), "no ground-truth PNGs in " + truths.string());
  } else {
    fail_validation("eval needs two label PNGs or two directories of them");
  }
  ConfusionCounts total;
  ordered_json docs = ordered_json::array();
  for (const auto& [p, t] : pairs) {
    const auto c = confusion(read_label_png(p), read_label_png(t));
    total += c;
    docs.push_back({{"document", t.filename().string()}, {"metrics", report_to_json(report(c))}});
  }
  const auto r = report(total);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_json(out_dir / "report.json", {{"documents", pairs.size()},
                                         {"aggregation", "micro"},
                                         {"metrics", report_to_json(r)},
                                         {"confusion", confusion_to_json(total)},
                                         {"per_document", docs}});
    write_file_atomic(out_dir / "report.txt", report_table(r));
  }
  return r;
}

E2EResult run_e2e(const RunDir& run, const PipelineConfig& config) {
  config.validate();
  fs::create_directories(run.root);
  write_json(run.root / "config.json", config_to_json(config));
  gen_corpus(run, config);
  fit_clusters(run, config);
  write_oracle_catalog(run, config);
  fuse_preview(run, config);
  synth_dataset(run, config);
  train_segmenter(run, config);
  write_documents(run, config, "grid", config.grid_documents);
  write_documents(run, config, "test", config.eval_documents);
  const auto grid = run_grid_search(run, config);

  predict_split(run, "test", grid.best);
  const auto metrics = evaluate_paths(run.eval() / "predictions", run.documents("test") / "truth", run.eval());
  write_provenance(run, "eval", config, {run.model().parent_path(), run.grid() / "best.json", run.documents("test")},
                   {run.eval()});
  log_stage("e2e", "test mIoU " + std::to_string(metrics.miou) + ", printed IoU " +
                       std::to_string(metrics.classes[kPrinted].iou) + ", handwritten IoU " +
                       std::to_string(metrics.classes[kHandwritten].iou));

  auto artifacts = hash_tree(run.root, run.root);
  artifacts.erase("provenance.json");
  ordered_json table = ordered_json::object();
  std::string digest_input;
  for (const auto& [name, digest] : artifacts) {
    table[name] = digest;
    digest_input += name + " " + digest + "\n";
  }
  E2EResult result{metrics, grid.best, sha256_hex(digest_input)};
  write_json(run.root / "provenance.json", {{"command", "e2e"},
                                            {"tool_version", kToolVersion},
                                            {"config", config_to_json(config)},
                                            {"selected_params", params_json(grid.best)},
                                            {"test_metrics", report_to_json(metrics)},
                                            {"artifacts_sha256", result.artifacts_sha256},
                                            {"artifacts", table}});
  return result;
}

}  // namespace docsynth
