#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "docsynth/error.hpp"
#include "docsynth/metrics.hpp"
#include "docsynth/pipeline.hpp"
#include "docsynth/server.hpp"

namespace fs = std::filesystem;
using namespace docsynth;

namespace {

int report_error(std::string_view kind, const std::string& message, int code) {
  const nlohmann::json line{{"error", {{"kind", kind}, {"message", message}}}};
  std::cerr << line.dump() << "\n";
  return code;
}

template <typename T>
void override_with(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> corpus_patches;
  std::optional<int> k;
  std::optional<std::size_t> samples_per_layer;
  std::optional<std::size_t> dataset_patches;
  std::optional<double> background_fraction;
  std::optional<int> iterations;
  std::optional<double> learning_rate;
  std::optional<int> hidden_width;
  std::optional<std::size_t> preview_patches;
  std::optional<std::size_t> grid_documents;
  std::optional<std::size_t> eval_documents;
  std::optional<double> overlap_factor;
  std::optional<double> min_confidence;
  std::optional<int> min_contour_area;

  void apply(PipelineConfig& c) const {
    override_with(seed, c.seed);
    override_with(corpus_patches, c.corpus_patches);
    override_with(k, c.kmeans.k);
    override_with(samples_per_layer, c.samples_per_layer);
    override_with(dataset_patches, c.dataset_patches);
    override_with(background_fraction, c.background_fraction);
    override_with(iterations, c.train.iterations);
    override_with(learning_rate, c.train.learning_rate);
    override_with(hidden_width, c.train.hidden_width);
    override_with(preview_patches, c.preview_patches);
    override_with(grid_documents, c.grid_documents);
    override_with(eval_documents, c.eval_documents);
    override_with(overlap_factor, c.inference.overlap_factor);
    override_with(min_confidence, c.inference.post.min_confidence);
    override_with(min_contour_area, c.inference.post.min_contour_area);
  }
};

void add_post_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--overlap-factor", o.overlap_factor, "Patch overlap factor in [0, 1)");
  cmd->add_option("--min-confidence", o.min_confidence, "Minimum confidence for text pixels");
  cmd->add_option("--min-contour-area", o.min_contour_area, "Text components smaller than this are dropped");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic document segmentation pipeline"};
  app.require_subcommand(1);
  std::optional<std::string> run_dir_flag;
  std::optional<std::string> config_path;
  Overrides o;
  app.add_option("--run-dir", run_dir_flag, "Run directory (default: $DOCSYNTH_RUN_DIR or ./run)");
  app.add_option("--config", config_path, "JSON config file; flags override its values")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Master seed");

  auto* gen = app.add_subcommand("gen-corpus", "Generate patches, labels and feature stacks");
  gen->add_option("--patches", o.corpus_patches, "Number of corpus patches");

  auto* fit = app.add_subcommand("fit-clusters", "Fit one spherical k-means model per feature layer");
  fit->add_option("--k", o.k, "Clusters per layer");
  fit->add_option("--samples-per-layer", o.samples_per_layer, "Pixel budget per layer");

  auto* annotate = app.add_subcommand("annotate", "Serve the annotation API, or write the oracle catalog");
  int port = 8765;
  std::optional<std::string> ui_dir;
  bool oracle = false;
  annotate->add_option("--port", port, "Port on 127.0.0.1 (0 picks a free one)");
  annotate->add_option("--ui-dir", ui_dir, "Directory of the built UI to serve at /");
  annotate->add_flag("--oracle", oracle, "Label clusters from generator truth and exit");

  auto* preview = app.add_subcommand("fuse-preview", "Render fused labels for sample corpus patches");
  preview->add_option("--count", o.preview_patches, "Number of patches");

  auto* synth = app.add_subcommand("synth-dataset", "Synthesize and balance the training dataset");
  synth->add_option("--patches", o.dataset_patches, "Patches to synthesize before balancing");
  synth->add_option("--background-fraction", o.background_fraction, "Background-only share after balancing");

  auto* train_cmd = app.add_subcommand("train", "Train the pixel segmenter on the balanced dataset");
  train_cmd->add_option("--iterations", o.iterations, "Optimizer steps");
  train_cmd->add_option("--learning-rate", o.learning_rate, "Initial learning rate");
  train_cmd->add_option("--hidden-width", o.hidden_width, "Hidden units (0 = linear)");

  auto* infer = app.add_subcommand("infer", "Segment one document image");
  std::string input, output;
  std::optional<std::string> model_path;
  infer->add_option("--input", input, "Document PNG")->required()->check(CLI::ExistingFile);
  infer->add_option("--output", output, "Label PNG to write (a _color.png visualization is written beside it)")
      ->required();
  infer->add_option("--model", model_path, "Model file (default: the run's model)");
  add_post_flags(infer, o);

  auto* eval = app.add_subcommand("eval", "Compare predicted label PNGs with ground truth");
  std::optional<std::string> pred_path, truth_path, out_dir;
  eval->add_option("--pred", pred_path, "Predicted label PNG or directory");
  eval->add_option("--truth", truth_path, "Ground-truth label PNG or directory");
  eval->add_option("--out", out_dir, "Report directory (default: <run>/eval)");
  eval->add_option("--documents", o.eval_documents, "Test documents when segmenting the run's test split");
  add_post_flags(eval, o);

  auto* grid_cmd = app.add_subcommand("grid-search", "Exhaustive search over post-processing parameters");
  grid_cmd->add_option("--documents", o.grid_documents, "Held-out documents");

  auto* e2e = app.add_subcommand("e2e", "Run the whole pipeline with the oracle catalog");
  e2e->add_option("--patches", o.corpus_patches, "Number of corpus patches");
  e2e->add_option("--k", o.k, "Clusters per layer");
  e2e->add_option("--dataset-patches", o.dataset_patches, "Patches to synthesize before balancing");
  e2e->add_option("--iterations", o.iterations, "Optimizer steps");
  e2e->add_option("--grid-documents", o.grid_documents, "Held-out documents for the grid search");
  e2e->add_option("--test-documents", o.eval_documents, "Test documents");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("usage", e.what(), 2);
  }

  try {
    PipelineConfig config = config_path ? load_config(*config_path) : PipelineConfig{};
    o.apply(config);
    config.validate();
    const RunDir run{resolve_run_dir(run_dir_flag)};
    fs::create_directories(run.root);

    if (*gen) {
      gen_corpus(run, config);
    } else if (*fit) {
      fit_clusters(run, config);
    } else if (*annotate) {
      if (oracle) {
        write_oracle_catalog(run, config);
      } else {
        AnnotationServer server(load_annotation_data(run, config));
        if (ui_dir) server.mount_ui(*ui_dir);
        const int bound = server.bind("127.0.0.1", port);
        std::cerr << "[annotate] serving http://127.0.0.1:" << bound << "/api/layers\n";
        server.serve();
      }
    } else if (*preview) {
      fuse_preview(run, config);
    } else if (*synth) {
      synth_dataset(run, config);
    } else if (*train_cmd) {
      train_segmenter(run, config);
    } else if (*infer) {
      const fs::path model_file = model_path ? fs::path(*model_path) : run.model();
      if (!fs::exists(model_file)) fail_validation("no model at " + model_file.string());
      const auto model = load_model(model_file);
      infer_file(model, input, output, config.inference);
    } else if (*eval) {
      if (pred_path.has_value() != truth_path.has_value()) throw Error(ErrorKind::Usage, "--pred and --truth go together");
      const fs::path report_dir = out_dir ? fs::path(*out_dir) : run.eval();
      MetricsReport r;
      if (pred_path) {
        r = evaluate_paths(*pred_path, *truth_path, report_dir);
      } else {
        if (!fs::is_directory(run.documents("test"))) write_documents(run, config, "test", config.eval_documents);
        const bool explicit_params = o.overlap_factor || o.min_confidence || o.min_contour_area;
        predict_split(run, "test", explicit_params ? config.inference : selected_params(run, config));
        r = evaluate_paths(run.eval() / "predictions", run.documents("test") / "truth", report_dir);
        write_provenance(run, "eval", config, {run.model().parent_path(), run.documents("test")}, {report_dir});
      }
      std::cout << report_table(r);
    } else if (*grid_cmd) {
      const auto result = run_grid_search(run, config);
      std::cout << grid_table(result);
    } else if (*e2e) {
      const auto result = run_e2e(run, config);
      std::cout << report_table(result.test_metrics);
      std::cout << "artifacts sha256 " << result.artifacts_sha256 << "\n";
    }
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::Usage:
        return report_error("usage", e.what(), 2);
      case ErrorKind::Validation:
        return report_error("validation", e.what(), 3);
      case ErrorKind::Runtime:
        return report_error("runtime", e.what(), 4);
    }
  } catch (const std::exception& e) {
    return report_error("runtime", e.what(), 4);
  }
  return 0;
}
