#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "docsynth/augment.hpp"
#include "docsynth/catalog.hpp"
#include "docsynth/clustering.hpp"
#include "docsynth/docgen.hpp"
#include "docsynth/gridsearch.hpp"
#include "docsynth/segmenter.hpp"
#include "docsynth/server.hpp"

namespace docsynth {

inline constexpr const char* kToolVersion = "docsynth 1.0.0";

struct PipelineConfig {
  std::uint64_t seed = 7;
  GenConfig generator;
  std::size_t corpus_patches = 200;
  KMeansOptions kmeans;
  std::size_t samples_per_layer = 200000;
  std::size_t max_stacks = 100;
  std::size_t dataset_patches = 2000;
  std::size_t min_class_pixels = 32;
  double background_fraction = 0.1;
  AugmentConfig augment;
  TrainConfig train;
  std::size_t grid_documents = 5;
  std::size_t eval_documents = 10;
  int document_size = 512;
  GridSpec grid = default_grid();
  InferenceParams inference{0.0, {0.7, 50}};
  std::size_t preview_patches = 8;

  void validate() const;
};

nlohmann::ordered_json config_to_json(const PipelineConfig& config);
/// Keys absent from `j` keep the values already in `base`; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

/// Fixed layout under one run directory.
struct RunDir {
  std::filesystem::path root;

  std::filesystem::path corpus() const { return root / "corpus"; }
  std::filesystem::path corpus_image(std::size_t i) const;
  std::filesystem::path corpus_label(std::size_t i) const;
  std::filesystem::path corpus_stack(std::size_t i) const;
  std::filesystem::path corpus_manifest() const { return corpus() / "manifest.json"; }
  std::filesystem::path clusters() const { return root / "clusters"; }
  std::filesystem::path cluster_model(int layer) const;
  std::filesystem::path catalog() const { return root / "catalog.json"; }
  std::filesystem::path preview() const { return root / "fuse_preview"; }
  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path raw_manifest() const { return dataset() / "manifest.jsonl"; }
  std::filesystem::path balanced_manifest() const { return dataset() / "balanced.jsonl"; }
  std::filesystem::path model() const { return root / "model" / "segmenter.bin"; }
  std::filesystem::path documents(const std::string& split) const { return root / "documents" / split; }
  std::filesystem::path grid() const { return root / "grid"; }
  std::filesystem::path eval() const { return root / "eval"; }
  std::filesystem::path provenance(const std::string& command) const;
};

/// --run-dir wins, then DOCSYNTH_RUN_DIR, then ./run.
std::filesystem::path resolve_run_dir(const std::optional<std::string>& flag);

/// Relative path -> sha256 for every file below `dir` (or the single file), sorted.
std::map<std::string, std::string> hash_tree(const std::filesystem::path& root, const std::filesystem::path& dir);

/// Writes provenance/<command>.json: tool version, config, input and output hashes.
void write_provenance(const RunDir& run, const std::string& command, const PipelineConfig& config,
                      const std::vector<std::filesystem::path>& inputs,
                      const std::vector<std::filesystem::path>& outputs);

// Pipeline stages. Each reads its inputs from and writes its outputs to the run directory.
void gen_corpus(const RunDir& run, const PipelineConfig& config);
std::vector<ClusterModel> fit_clusters(const RunDir& run, const PipelineConfig& config);
std::vector<ClusterModel> load_cluster_models(const RunDir& run);
/// Oracle annotator over the corpus (first max_stacks patches); writes catalog.json.
ClusterCatalog write_oracle_catalog(const RunDir& run, const PipelineConfig& config);
AnnotationData load_annotation_data(const RunDir& run, const PipelineConfig& config);
/// Fused labels for the first preview_patches corpus patches; returns pixel agreement with generator truth.
double fuse_preview(const RunDir& run, const PipelineConfig& config);
DatasetManifest synth_dataset(const RunDir& run, const PipelineConfig& config);
SegModel train_segmenter(const RunDir& run, const PipelineConfig& config);
/// Held-out generator documents: documents/<split>/doc_NNN.png and truth_NNN.png.
void write_documents(const RunDir& run, const PipelineConfig& config, const std::string& split, std::size_t count);
std::vector<EvalDocument> load_documents(const RunDir& run, const std::string& split);
GridSearchResult run_grid_search(const RunDir& run, const PipelineConfig& config);
/// Best parameters recorded by the grid search, or the configured inference parameters.
InferenceParams selected_params(const RunDir& run, const PipelineConfig& config);
void infer_file(const SegModel& model, const std::filesystem::path& input, const std::filesystem::path& output,
                const InferenceParams& params);
/// Segments every test document with `params` into eval/predictions.
void predict_split(const RunDir& run, const std::string& split, const InferenceParams& params);
/// Pairs files by name; a single file on each side is also accepted.
MetricsReport evaluate_paths(const std::filesystem::path& predictions, const std::filesystem::path& truths,
                             const std::filesystem::path& out_dir);

struct E2EResult {
  MetricsReport test_metrics;
  InferenceParams selected;
  std::string artifacts_sha256;  // hash over the sorted artifact hash table
};

E2EResult run_e2e(const RunDir& run, const PipelineConfig& config);

}  // namespace docsynth
