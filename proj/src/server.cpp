#include "docsynth/server.hpp"

#include <fstream>
#include <mutex>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "docsynth/png_io.hpp"

namespace docsynth {

namespace {

using nlohmann::ordered_json;

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, const ordered_json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", kJson);
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
  send_json(res, {{"error", {{"kind", kind}, {"message", message}}}}, status);
}

ordered_json report_json(const ValidationReport& report) {
  ordered_json issues = ordered_json::array();
  for (const auto& i : report.issues)
    issues.push_back({{"code", i.code}, {"layer_id", i.layer_id}, {"cluster_id", i.cluster_id}, {"message", i.message}});
  return {{"valid", report.ok()}, {"issues", issues}};
}

// Parses a non-negative decimal path or query component.
bool parse_index(const std::string& text, std::size_t& out) {
  if (text.empty() || text.size() > 9) return false;
  std::size_t v = 0;
  for (const char c : text) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  out = v;
  return true;
}

}  // namespace

struct AnnotationServer::Impl {
  AnnotationData data;
  httplib::Server server;
  std::mutex catalog_mutex;

  std::string read_catalog_text() {
    std::lock_guard lock(catalog_mutex);
    std::ifstream in(data.catalog_path, std::ios::binary);
    if (!in) return {};
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  const ClusterModel* layer(const std::string& text) const {
    std::size_t id = 0;
    if (!parse_index(text, id) || id >= data.models.size()) return nullptr;
    return &data.models[id];
  }

  void routes() {
    server.Get("/api/layers", [this](const httplib::Request&, httplib::Response& res) {
      ordered_json layers = ordered_json::array();
      for (std::size_t l = 0; l < data.models.size(); ++l) {
        const int size = data.maps.empty() ? 0 : data.maps.front()[l].size();
        layers.push_back({{"layer_id", data.models[l].layer_id},
                          {"size", size},
                          {"k", data.models[l].k},
                          {"role", to_string(default_role_for_size(size))}});
      }
      send_json(res, {{"layers", layers}, {"patches", data.patches.size()}});
    });

    server.Get(R"(/api/layers/(\d+)/clusters)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto* model = layer(req.matches[1]);
      if (!model) return send_error(res, 404, "not-found", "unknown layer " + std::string(req.matches[1]));
      std::vector<std::size_t> totals(model->k, 0);
      for (const auto& maps : data.maps) {
        const auto counts = cluster_counts(maps[model->layer_id]);
        for (int j = 0; j < model->k; ++j) totals[j] += counts[j];
      }
      ordered_json clusters = ordered_json::array();
      for (int j = 0; j < model->k; ++j) clusters.push_back({{"cluster_id", j}, {"pixels", totals[j]}});
      send_json(res, {{"layer_id", model->layer_id}, {"k", model->k}, {"clusters", clusters}});
    });

    server.Get(R"(/api/layers/(\d+)/clusters/(\d+)/overlay)", [this](const httplib::Request& req,
                                                                    httplib::Response& res) {
      const auto* model = layer(req.matches[1]);
      std::size_t cid = 0, patch = 0;
      if (!model) return send_error(res, 404, "not-found", "unknown layer " + std::string(req.matches[1]));
      if (!parse_index(req.matches[2], cid) || cid >= static_cast<std::size_t>(model->k))
        return send_error(res, 404, "not-found", "unknown cluster " + std::string(req.matches[2]));
      if (req.has_param("patch") && !parse_index(req.get_param_value("patch"), patch))
        return send_error(res, 400, "validation", "patch must be a non-negative integer");
      if (patch >= data.patches.size())
        return send_error(res, 404, "not-found", "patch index out of range");
      const auto overlay =
          render_overlay(data.patches[patch], data.maps[patch][model->layer_id], static_cast<int>(cid));
      const auto png = encode_png(overlay);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });

    server.Get(R"(/api/patches/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t n = 0;
      if (!parse_index(req.matches[1], n) || n >= data.patches.size())
        return send_error(res, 404, "not-found", "patch index out of range");
      const auto png = encode_png(data.patches[n]);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });

    server.Get("/api/catalog", [this](const httplib::Request&, httplib::Response& res) {
      const auto text = read_catalog_text();
      if (text.empty()) return send_error(res, 404, "not-found", "no catalog saved yet");
      res.set_content(text, kJson);
    });

    server.Post("/api/catalog", [this](const httplib::Request& req, httplib::Response& res) {
      ClusterCatalog catalog;
      try {
        catalog = catalog_from_json(req.body);
      } catch (const Error& e) {
        return send_error(res, 400, "validation", e.what());
      }
      const auto report = validate_catalog(catalog, data.models);
      if (!report.ok()) return send_json(res, report_json(report), 422);
      {
        std::lock_guard lock(catalog_mutex);
        write_file_atomic(data.catalog_path, catalog_to_json(catalog));
      }
      send_json(res, report_json(report));
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, "runtime", e.what());
      } catch (...) {
        send_error(res, 500, "runtime", "unknown error");
      }
    });
  }
};

AnnotationServer::AnnotationServer(AnnotationData data) : impl_(std::make_unique<Impl>()) {
  require(!data.models.empty(), "annotation server needs cluster models");
  require(!data.patches.empty() && data.patches.size() == data.maps.size(), "annotation server needs sample patches");
  for (const auto& maps : data.maps) require(maps.size() == data.models.size(), "one assignment map per layer");
  impl_->data = std::move(data);
  impl_->routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::mount_ui(const std::filesystem::path& dir) {
  if (!impl_->server.set_mount_point("/", dir.string())) fail_validation("UI directory not found: " + dir.string());
}

int AnnotationServer::bind(const std::string& host, int port) {
  require(port >= 0 && port <= 65535, "port must be in [0, 65535]");
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) fail_runtime("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) fail_runtime("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void AnnotationServer::serve() {
  if (!impl_->server.listen_after_bind()) fail_runtime("server stopped unexpectedly");
}

void AnnotationServer::stop() {
  if (impl_) impl_->server.stop();
}

void AnnotationServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace docsynth
