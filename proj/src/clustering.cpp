#include "docsynth/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ranges>
#include <sstream>

#include <json.hpp>

#include "docsynth/parallel.hpp"
#include "docsynth/png_io.hpp"

namespace docsynth {

namespace {

constexpr double kZeroNorm = 1e-12;

// Unit-normalised copy in double precision; zero rows stay zero.
std::vector<double> normalized_rows(const SampleMatrix& samples) {
  const std::size_t n = samples.rows();
  const int d = samples.dim;
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = samples.row(i);
    double norm = 0.0;
    for (const float v : x) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (norm < kZeroNorm) continue;
    for (int c = 0; c < d; ++c) out[i * d + c] = x[c] / norm;
  }
  return out;
}

struct Best {
  int id;
  double sim;
};

// Best centroid for a unit (or zero) vector; strict > keeps the lowest id on ties.
template <int D>
Best best_of_fixed(const double* x, const double* centroids, int k) {
  Best best{0, -std::numeric_limits<double>::infinity()};
  for (int j = 0; j < k; ++j) {
    const double* c = centroids + static_cast<std::size_t>(j) * D;
    double s = 0.0;
    for (int t = 0; t < D; ++t) s += x[t] * c[t];
    if (s > best.sim) best = {j, s};
  }
  return best;
}

Best best_of(const double* x, const std::vector<double>& centroids, int k, int d) {
  if (d == 8) return best_of_fixed<8>(x, centroids.data(), k);
  Best best{0, -std::numeric_limits<double>::infinity()};
  for (int j = 0; j < k; ++j) {
    const double* c = centroids.data() + static_cast<std::size_t>(j) * d;
    double s = 0.0;
    for (int t = 0; t < d; ++t) s += x[t] * c[t];
    if (s > best.sim) best = {j, s};
  }
  return best;
}

struct RunResult {
  std::vector<double> centroids;
  std::vector<double> history;
  int iterations = 0;
  double objective = 0.0;
};

std::vector<double> seed_centroids(const std::vector<double>& x, std::size_t n, int d, int k, std::mt19937_64& rng) {
  std::vector<double> centroids(static_cast<std::size_t>(k) * d, 0.0);
  std::vector<std::size_t> nonzero;
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = x.data() + i * d;
    if (std::any_of(r, r + d, [](double v) { return v != 0.0; })) nonzero.push_back(i);
  }
  if (nonzero.empty()) {
    for (int j = 0; j < k; ++j) centroids[static_cast<std::size_t>(j) * d] = 1.0;
    return centroids;
  }
  const auto put = [&](int j, std::size_t i) { std::copy_n(x.data() + i * d, d, centroids.data() + j * d); };
  put(0, nonzero[std::uniform_int_distribution<std::size_t>(0, nonzero.size() - 1)(rng)]);
  std::vector<double> best_sim(nonzero.size(), -std::numeric_limits<double>::infinity());
  std::vector<double> weight(nonzero.size());
  for (int j = 1; j < k; ++j) {
    const double* c = centroids.data() + static_cast<std::size_t>(j - 1) * d;
    double total = 0.0;
    for (std::size_t m = 0; m < nonzero.size(); ++m) {
      const double* r = x.data() + nonzero[m] * d;
      double s = 0.0;
      for (int t = 0; t < d; ++t) s += r[t] * c[t];
      best_sim[m] = std::max(best_sim[m], s);
      const double dist = std::max(0.0, 1.0 - best_sim[m]);
      weight[m] = dist * dist;
      total += weight[m];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = std::uniform_int_distribution<std::size_t>(0, nonzero.size() - 1)(rng);
    } else {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = nonzero.size() - 1;
      for (std::size_t m = 0; m < nonzero.size(); ++m) {
        target -= weight[m];
        if (target < 0.0) {
          pick = m;
          break;
        }
      }
    }
    put(j, nonzero[pick]);
  }
  return centroids;
}

// Per-cluster sums of the samples under `labels`.
std::vector<double> cluster_sums(const std::vector<double>& x, std::size_t n, int d, int k,
                                 const std::vector<int>& labels, std::vector<std::size_t>& members) {
  std::vector<double> sums(static_cast<std::size_t>(k) * d, 0.0);
  members.assign(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double* s = sums.data() + static_cast<std::size_t>(labels[i]) * d;
    for (int t = 0; t < d; ++t) s[t] += x[i * d + t];
    ++members[labels[i]];
  }
  return sums;
}

// Single-sample transfers: each sample moves to the cluster that most raises
// sum_j |S_j|, never emptying a cluster. Returns the number of moves.
std::size_t transfer_pass(const std::vector<double>& x, std::size_t n, int d, int k, std::vector<int>& labels) {
  constexpr double kMinGain = 1e-10;
  std::vector<std::size_t> members;
  auto sums = cluster_sums(x, n, d, k, labels, members);
  std::vector<double> norm2(k);
  for (int j = 0; j < k; ++j) {
    const double* s = sums.data() + static_cast<std::size_t>(j) * d;
    norm2[j] = std::inner_product(s, s + d, s, 0.0);
  }
  std::size_t moves = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = x.data() + i * d;
    const int a = labels[i];
    if (members[a] <= 1 || std::all_of(r, r + d, [](double v) { return v == 0.0; })) continue;
    const auto dot = [&](int j) {
      const double* s = sums.data() + static_cast<std::size_t>(j) * d;
      return std::inner_product(r, r + d, s, 0.0);
    };
    const double loss = std::sqrt(std::max(0.0, norm2[a] - 2.0 * dot(a) + 1.0)) - std::sqrt(norm2[a]);
    int target = -1;
    double best = kMinGain;
    for (int b = 0; b < k; ++b) {
      if (b == a) continue;
      const double gain = loss + std::sqrt(std::max(0.0, norm2[b] + 2.0 * dot(b) + 1.0)) - std::sqrt(norm2[b]);
      if (gain > best) {
        best = gain;
        target = b;
      }
    }
    if (target < 0) continue;
    double* sa = sums.data() + static_cast<std::size_t>(a) * d;
    double* sb = sums.data() + static_cast<std::size_t>(target) * d;
    for (int t = 0; t < d; ++t) {
      sa[t] -= r[t];
      sb[t] += r[t];
    }
    norm2[a] = std::inner_product(sa, sa + d, sa, 0.0);
    norm2[target] = std::inner_product(sb, sb + d, sb, 0.0);
    --members[a];
    ++members[target];
    labels[i] = target;
    ++moves;
  }
  return moves;
}

RunResult run_once(const std::vector<double>& x, std::size_t n, int d, const KMeansOptions& opt,
                   std::mt19937_64& rng) {
  const int k = opt.k;
  RunResult run;
  run.centroids = seed_centroids(x, n, d, k, rng);
  std::vector<int> labels(n, -1), previous;
  std::vector<double> sims(n);

  const auto assign_pass = [&] {
    std::vector<int> next(n);
    parallel_for(n, [&](std::size_t i) {
      const auto b = best_of(x.data() + i * d, run.centroids, k, d);
      next[i] = b.id;
      sims[i] = b.sim;
    });
    double obj = 0.0;
    for (const double s : sims) obj += s;
    labels = std::move(next);
    run.history.push_back(obj);
    return obj;
  };

  int it = 0;
  for (;;) {
    bool needs_final_pass = true;
    for (; it < opt.max_iter; ++it) {
      assign_pass();
      if (labels == previous) {
        needs_final_pass = false;
        break;
      }
      // Centroid update: deterministic summation in sample order.
      std::vector<std::size_t> members;
      const auto sums = cluster_sums(x, n, d, k, labels, members);
      std::vector<char> taken(n, 0);
      double movement = 0.0;
      for (int j = 0; j < k; ++j) {
        const double* s = sums.data() + static_cast<std::size_t>(j) * d;
        double norm = 0.0;
        for (int t = 0; t < d; ++t) norm += s[t] * s[t];
        norm = std::sqrt(norm);
        std::vector<double> next(d);
        if (members[j] == 0 || norm < kZeroNorm) {
          // Reseed from the sample that fits its centroid worst.
          std::size_t far = n;
          for (std::size_t i = 0; i < n; ++i)
            if (!taken[i] && (far == n || sims[i] < sims[far])) far = i;
          if (far == n) {
            std::copy_n(run.centroids.data() + static_cast<std::size_t>(j) * d, d, next.begin());
          } else {
            taken[far] = 1;
            const double* r = x.data() + far * d;
            if (std::all_of(r, r + d, [](double v) { return v == 0.0; }))
              std::copy_n(run.centroids.data() + static_cast<std::size_t>(j) * d, d, next.begin());
            else
              std::copy_n(r, d, next.begin());
          }
        } else {
          for (int t = 0; t < d; ++t) next[t] = s[t] / norm;
        }
        double delta = 0.0;
        for (int t = 0; t < d; ++t) {
          const double diff = next[t] - run.centroids[static_cast<std::size_t>(j) * d + t];
          delta += diff * diff;
        }
        movement = std::max(movement, std::sqrt(delta));
        std::copy(next.begin(), next.end(), run.centroids.begin() + static_cast<std::ptrdiff_t>(j) * d);
      }
      previous = labels;
      run.iterations = it + 1;
      if (movement < opt.tol) {
        ++it;
        break;
      }
    }
    if (needs_final_pass) assign_pass();
    if (it >= opt.max_iter || transfer_pass(x, n, d, k, labels) == 0) break;
    // Resume Lloyd from the refined partition.
    std::vector<std::size_t> members;
    const auto sums = cluster_sums(x, n, d, k, labels, members);
    for (int j = 0; j < k; ++j) {
      const double* s = sums.data() + static_cast<std::size_t>(j) * d;
      const double norm = std::sqrt(std::inner_product(s, s + d, s, 0.0));
      if (norm < kZeroNorm) continue;
      for (int t = 0; t < d; ++t) run.centroids[static_cast<std::size_t>(j) * d + t] = s[t] / norm;
    }
    previous.clear();
    ++it;
    run.iterations = it;
  }
  run.objective = run.history.back();
  return run;
}

}  // namespace

ClusterModel fit_spherical_kmeans(const SampleMatrix& samples, const KMeansOptions& options, GenSeed seed,
                                  int layer_id) {
  require(options.k >= 1, "k must be >= 1");
  require(samples.dim >= 1, "sample dimension must be >= 1");
  require(samples.values.size() % static_cast<std::size_t>(samples.dim) == 0, "ragged sample matrix");
  require(samples.rows() >= static_cast<std::size_t>(options.k), "fewer samples than clusters");
  require(options.max_iter >= 1 && options.restarts >= 1, "max_iter and restarts must be >= 1");
  const std::size_t n = samples.rows();
  const int d = samples.dim;
  const auto x = normalized_rows(samples);

  ClusterModel model;
  model.layer_id = layer_id;
  model.k = options.k;
  model.dim = d;
  double best = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < options.restarts; ++r) {
    auto rng = make_stream(seed, "kmeans.restart." + std::to_string(r));
    auto run = run_once(x, n, d, options, rng);
    if (run.objective > best) {
      best = run.objective;
      model.centroids = std::move(run.centroids);
      model.fit = FitMeta{run.iterations, run.objective, std::move(run.history), n, r};
    }
  }
  return model;
}

namespace {

// x holds `dim` values spaced `stride` apart; buf has room for dim doubles.
int nearest_id(const ClusterModel& model, const float* x, std::size_t stride, double* buf) {
  double norm = 0.0;
  for (int t = 0; t < model.dim; ++t) {
    buf[t] = x[t * stride];
    norm += buf[t] * buf[t];
  }
  if (std::sqrt(norm) < kZeroNorm) return 0;
  return best_of(buf, model.centroids, model.k, model.dim).id;
}

}  // namespace

int nearest_centroid(const ClusterModel& model, std::span<const float> x) {
  require(static_cast<int>(x.size()) == model.dim, "feature dimension does not match centroid dimension");
  std::vector<double> buf(model.dim);
  return nearest_id(model, x.data(), 1, buf.data());
}

double cosine_objective(const ClusterModel& model, const SampleMatrix& samples) {
  require(samples.dim == model.dim, "sample dimension does not match model");
  const auto x = normalized_rows(samples);
  double obj = 0.0;
  for (std::size_t i = 0; i < samples.rows(); ++i)
    obj += best_of(x.data() + i * model.dim, model.centroids, model.k, model.dim).sim;
  return obj;
}

AssignmentMap assign(const ClusterModel& model, const FeatureLayer& layer) {
  require(layer.channels == model.dim, "layer channel count does not match centroid dimension");
  require(layer.values.size() == static_cast<std::size_t>(layer.channels) * layer.size * layer.size,
          "feature layer value count mismatch");
  AssignmentMap out{model.layer_id, model.k, Image<std::uint16_t>(layer.size, layer.size)};
  const std::size_t plane = static_cast<std::size_t>(layer.size) * layer.size;
  auto ids = out.ids.pixels();
  parallel_for(static_cast<std::size_t>(layer.size), [&](std::size_t y) {
    std::vector<double> buf(layer.channels);
    for (std::size_t x = 0; x < static_cast<std::size_t>(layer.size); ++x) {
      const std::size_t p = y * layer.size + x;
      ids[p] = static_cast<std::uint16_t>(nearest_id(model, layer.values.data() + p, plane, buf.data()));
    }
  });
  return out;
}

std::vector<std::size_t> cluster_counts(const AssignmentMap& map) {
  std::vector<std::size_t> counts(map.k, 0);
  for (const auto id : map.ids.pixels())
    if (id < map.k) ++counts[id];
  return counts;
}

std::vector<std::vector<PixelRef>> sample_pixel_refs(std::span<const FeatureStack> stacks,
                                                     std::size_t per_layer_budget, GenSeed seed,
                                                     std::size_t max_stacks) {
  require(!stacks.empty(), "no feature stacks to sample from");
  require(per_layer_budget >= 1, "pixel budget must be >= 1");
  const std::size_t used = std::min(stacks.size(), max_stacks);
  const auto& first = stacks.front();
  std::vector<std::vector<PixelRef>> refs(first.layers.size());
  for (std::size_t l = 0; l < first.layers.size(); ++l) {
    const std::size_t plane = static_cast<std::size_t>(first.layers[l].size) * first.layers[l].size;
    const std::size_t total = used * plane;
    std::vector<std::size_t> chosen;
    if (per_layer_budget >= total) {
      chosen.resize(total);
      std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    } else {
      auto rng = make_stream(seed, "sample.layer." + std::to_string(l));
      chosen.reserve(per_layer_budget);
      // Selection sampling: ascending indices, each subset equally likely.
      std::size_t needed = per_layer_budget;
      for (std::size_t i = 0; i < total && needed > 0; ++i) {
        if (std::uniform_int_distribution<std::size_t>(0, total - i - 1)(rng) < needed) {
          chosen.push_back(i);
          --needed;
        }
      }
    }
    refs[l].reserve(chosen.size());
    for (const auto idx : chosen)
      refs[l].push_back({static_cast<std::uint32_t>(idx / plane), static_cast<std::uint32_t>(idx % plane)});
  }
  return refs;
}

std::vector<SampleMatrix> sample_training_pixels(std::span<const FeatureStack> stacks, std::size_t per_layer_budget,
                                                 GenSeed seed, std::size_t max_stacks) {
  const auto refs = sample_pixel_refs(stacks, per_layer_budget, seed, max_stacks);
  std::vector<SampleMatrix> out(refs.size());
  for (std::size_t l = 0; l < refs.size(); ++l) {
    const int channels = stacks.front().layers[l].channels;
    out[l].dim = channels;
    out[l].values.reserve(refs[l].size() * channels);
    for (const auto& r : refs[l]) {
      const auto& layer = stacks[r.stack].layers.at(l);
      require(layer.channels == channels, "inconsistent channel counts across stacks");
      const std::size_t plane = static_cast<std::size_t>(layer.size) * layer.size;
      for (int c = 0; c < channels; ++c) out[l].values.push_back(layer.values[c * plane + r.pixel]);
    }
  }
  return out;
}

std::vector<ClusterModel> fit_layer_models(std::span<const FeatureStack> stacks, const KMeansOptions& options,
                                           std::size_t per_layer_budget, GenSeed seed, std::size_t max_stacks) {
  const auto samples = sample_training_pixels(stacks, per_layer_budget, seed, max_stacks);
  std::vector<ClusterModel> models(samples.size());
  for (std::size_t l = 0; l < samples.size(); ++l)
    models[l] = fit_spherical_kmeans(samples[l], options, derive_seed(seed, l), static_cast<int>(l));
  return models;
}

std::string cluster_model_to_json(const ClusterModel& model) {
  nlohmann::json j;
  j["layer_id"] = model.layer_id;
  j["k"] = model.k;
  j["dim"] = model.dim;
  auto rows = nlohmann::json::array();
  for (int c = 0; c < model.k; ++c) {
    const auto row = model.centroid(c);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["centroids"] = rows;
  j["fit"] = {{"iterations", model.fit.iterations},
              {"objective", model.fit.objective},
              {"objective_history", model.fit.objective_history},
              {"samples", model.fit.samples},
              {"restart", model.fit.restart}};
  return j.dump(2) + "\n";
}

ClusterModel cluster_model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    ClusterModel m;
    m.layer_id = j.at("layer_id").get<int>();
    m.k = j.at("k").get<int>();
    m.dim = j.at("dim").get<int>();
    for (const auto& row : j.at("centroids")) {
      const auto values = row.get<std::vector<double>>();
      require(static_cast<int>(values.size()) == m.dim, "centroid row has wrong dimension");
      m.centroids.insert(m.centroids.end(), values.begin(), values.end());
    }
    require(m.k >= 1 && m.centroids.size() == static_cast<std::size_t>(m.k) * m.dim, "centroid count mismatch");
    const auto& fit = j.at("fit");
    m.fit.iterations = fit.at("iterations").get<int>();
    m.fit.objective = fit.at("objective").get<double>();
    m.fit.objective_history = fit.at("objective_history").get<std::vector<double>>();
    m.fit.samples = fit.at("samples").get<std::size_t>();
    m.fit.restart = fit.at("restart").get<int>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail_validation(std::string("malformed cluster model: ") + e.what());
  }
}

void save_cluster_model(const std::filesystem::path& path, const ClusterModel& model) {
  write_file_atomic(path, cluster_model_to_json(model));
}

ClusterModel load_cluster_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_runtime("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return cluster_model_from_json(ss.str());
}

}  // namespace docsynth
