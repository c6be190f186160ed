#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "docsynth/catalog.hpp"
#include "docsynth/clustering.hpp"
#include "docsynth/image.hpp"

namespace docsynth {

/// Everything the annotation API serves; loaded once, never mutated.
struct AnnotationData {
  std::vector<ClusterModel> models;                  // indexed by layer id
  std::vector<RgbRaster> patches;                    // sample patches shown to the annotator
  std::vector<std::vector<AssignmentMap>> maps;      // maps[patch][layer]
  std::filesystem::path catalog_path;
};

/// Local HTTP API:
///   GET  /api/layers
///   GET  /api/layers/{id}/clusters
///   GET  /api/layers/{id}/clusters/{cid}/overlay?patch=n
///   GET  /api/patches/{n}
///   GET  /api/catalog
///   POST /api/catalog     validated, then atomically replaced
class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationData data);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Serves static files (the built UI) at "/".
  void mount_ui(const std::filesystem::path& dir);
  /// Returns the bound port; port 0 picks a free one.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace docsynth
