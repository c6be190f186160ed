#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "docsynth/docgen.hpp"
#include "docsynth/image.hpp"
#include "docsynth/rng.hpp"

namespace docsynth {

/// Row-major matrix of sample vectors, one row per sample.
struct SampleMatrix {
  int dim = 0;
  std::vector<float> values;

  std::size_t rows() const { return dim == 0 ? 0 : values.size() / static_cast<std::size_t>(dim); }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
  }
};

struct FitMeta {
  int iterations = 0;
  double objective = 0.0;                  // sum over samples of the best cosine similarity
  std::vector<double> objective_history;   // one entry per assignment pass of the winning restart
  std::size_t samples = 0;
  int restart = 0;
};

struct ClusterModel {
  int layer_id = 0;
  int k = 0;
  int dim = 0;
  std::vector<double> centroids;  // k rows of unit vectors
  FitMeta fit;

  std::span<const double> centroid(int j) const {
    return std::span<const double>(centroids).subspan(static_cast<std::size_t>(j) * dim, static_cast<std::size_t>(dim));
  }
};

struct KMeansOptions {
  int k = 20;
  int max_iter = 100;
  double tol = 1e-4;
  int restarts = 1;
};

/// Spherical k-means: maximises the summed cosine similarity between samples
/// and their closest centroid. Seeding is k-means++ on d = 1 - cos; empty
/// clusters are reseeded from the worst-fitting sample. A zero sample has
/// cosine 0 with every centroid, goes to cluster 0 and adds nothing to centroid sums.
/// Lloyd rounds stop once the assignment is stable or every centroid moves less
/// than `tol`; single-sample transfers that raise the objective then restart them.
ClusterModel fit_spherical_kmeans(const SampleMatrix& samples, const KMeansOptions& options, GenSeed seed,
                                  int layer_id = 0);

/// argmax_j cos(x, c_j), ties to the lowest id; zero vectors map to cluster 0.
int nearest_centroid(const ClusterModel& model, std::span<const float> x);

/// Cosine objective of a model on a sample set.
double cosine_objective(const ClusterModel& model, const SampleMatrix& samples);

struct AssignmentMap {
  int layer_id = 0;
  int k = 0;
  Image<std::uint16_t> ids;

  int size() const { return ids.height(); }
};

AssignmentMap assign(const ClusterModel& model, const FeatureLayer& layer);

/// Per-pixel cluster counts of one map.
std::vector<std::size_t> cluster_counts(const AssignmentMap& map);

/// Uniform sample without replacement of pixel feature vectors, one matrix per
/// layer, drawn from the first `max_stacks` stacks.
std::vector<SampleMatrix> sample_training_pixels(std::span<const FeatureStack> stacks, std::size_t per_layer_budget,
                                                 GenSeed seed, std::size_t max_stacks = 100);

/// Pixel provenance of the sample above: (stack index, pixel index) pairs per layer.
struct PixelRef {
  std::uint32_t stack;
  std::uint32_t pixel;
  bool operator==(const PixelRef&) const = default;
};
std::vector<std::vector<PixelRef>> sample_pixel_refs(std::span<const FeatureStack> stacks,
                                                     std::size_t per_layer_budget, GenSeed seed,
                                                     std::size_t max_stacks = 100);

/// One model per layer.
std::vector<ClusterModel> fit_layer_models(std::span<const FeatureStack> stacks, const KMeansOptions& options,
                                           std::size_t per_layer_budget, GenSeed seed, std::size_t max_stacks = 100);

std::string cluster_model_to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const std::string& text);
void save_cluster_model(const std::filesystem::path& path, const ClusterModel& model);
ClusterModel load_cluster_model(const std::filesystem::path& path);

}  // namespace docsynth
