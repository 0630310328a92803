#include "xstack/acl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "xstack/error.hpp"
#include "xstack/hash.hpp"
#include "xstack/matrix.hpp"
#include "xstack/stats.hpp"

namespace xstack {

void Whitelist::enroll(const std::string& id, std::span<const double> embedding) {
  if (frozen_) throw StateError("whitelist is frozen");
  if (embedding.empty()) throw InvalidArgument("empty embedding for '" + id + "'");
  if (width_ != 0 && embedding.size() != width_) throw InvalidArgument("embedding width mismatch for '" + id + "'");
  for (const auto& t : templates_)
    if (t.id == id) throw InvalidArgument("duplicate identity '" + id + "'");
  if (l2_norm(embedding) == 0.0) throw InvalidArgument("zero embedding for '" + id + "'");
  templates_.push_back({id, normalized(embedding)});
  width_ = embedding.size();
}

Whitelist enroll(const std::vector<EnrollmentEntry>& entries) {
  Whitelist w;
  for (const auto& [id, e] : entries) w.enroll(id, e);
  return w;
}

AclDecision decide(std::span<const double> probe, const Whitelist& whitelist, double tau) {
  const auto start = std::chrono::steady_clock::now();
  if (!whitelist.empty() && probe.size() != whitelist.width())
    throw InvalidArgument("probe width does not match the whitelist");
  if (l2_norm(probe) == 0.0) throw InvalidArgument("probe embedding is zero");

  AclDecision d;
  d.threshold = tau;
  const IdentityTemplate* best = nullptr;
  for (const auto& t : whitelist.templates()) {
    const double s = cosine(probe, t.embedding);
    if (best == nullptr || s > d.similarity || (s == d.similarity && t.id < best->id)) {
      best = &t;
      d.similarity = s;
    }
  }
  if (best != nullptr && d.similarity >= tau) {
    d.grant = true;
    d.matched_id = best->id;
  }
  d.latency_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
  return d;
}

std::vector<double> pair_similarities(const std::vector<EmbeddingPair>& pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.probe.size() != p.reference.size()) throw InvalidArgument("embedding pair width mismatch");
    out.push_back(cosine(p.probe, p.reference));
  }
  return out;
}

std::vector<double> default_threshold_grid(std::size_t points) {
  if (points < 2) throw InvalidArgument("threshold grid needs at least two points");
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i)
    grid[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(points - 1);
  return grid;
}

AclCalibration sweep_far_frr(std::span<const double> genuine, std::span<const double> impostor,
                             std::span<const double> thresholds) {
  if (genuine.empty() || impostor.empty()) throw InvalidArgument("FAR/FRR need non-empty genuine and impostor sets");
  if (thresholds.empty()) throw InvalidArgument("threshold grid is empty");
  std::vector<double> g(genuine.begin(), genuine.end());
  std::vector<double> im(impostor.begin(), impostor.end());
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::vector<double> grid(thresholds.begin(), thresholds.end());
  std::sort(grid.begin(), grid.end());

  AclCalibration c;
  c.thresholds = grid;
  for (double tau : grid) {
    const auto accepted = im.end() - std::lower_bound(im.begin(), im.end(), tau);
    const auto rejected = std::lower_bound(g.begin(), g.end(), tau) - g.begin();
    c.far.push_back(static_cast<double>(accepted) / static_cast<double>(im.size()));
    c.frr.push_back(static_cast<double>(rejected) / static_cast<double>(g.size()));
  }
  return c;
}

CalibrationOutcome calibrate_threshold(AclCalibration& calibration, double lambda,
                                       std::span<const double> latency_ms, double latency_budget_ms) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("lambda must lie in [0, 1]");
  if (calibration.thresholds.empty()) throw InvalidArgument("calibration grid is empty");
  if (latency_ms.empty()) throw InvalidArgument("latency constraint needs at least one sample");

  CalibrationOutcome out;
  out.latency_p90_ms = nearest_rank_percentile(latency_ms, 0.9);
  calibration.lambda = lambda;
  calibration.latency_budget_ms = latency_budget_ms;
  calibration.latency_p90_ms = out.latency_p90_ms;
  calibration.objective.resize(calibration.thresholds.size());
  for (std::size_t i = 0; i < calibration.thresholds.size(); ++i)
    calibration.objective[i] = lambda * calibration.far[i] + (1.0 - lambda) * calibration.frr[i];

  calibration.feasible = out.latency_p90_ms <= latency_budget_ms;
  calibration.tau_star.reset();
  out.feasible = calibration.feasible;
  if (!out.feasible) return out;

  std::size_t best = 0;
  for (std::size_t i = 1; i < calibration.objective.size(); ++i)
    if (calibration.objective[i] <= calibration.objective[best]) best = i;
  out.tau = calibration.thresholds[best];
  out.objective = calibration.objective[best];
  calibration.tau_star = out.tau;
  return out;
}

std::vector<double> synthetic_embedding(const std::string& identity, double noise_sigma, std::uint64_t seed,
                                        std::size_t width) {
  return SyntheticEmbeddingProvider(width).embed(identity, noise_sigma, seed);
}

std::vector<double> SyntheticEmbeddingProvider::embed(const std::string& identity, double noise_sigma,
                                                      std::uint64_t seed) const {
  if (noise_sigma < 0.0) throw InvalidArgument("noise sigma must be non-negative");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::mt19937_64 base_rng(stable_hash64(identity, base_seed_));
  std::vector<double> v(width_);
  for (double& x : v) x = normal(base_rng);
  v = normalized(v);
  if (noise_sigma > 0.0) {
    std::mt19937_64 noise_rng(stable_hash64(identity, seed ^ 0x9e3779b97f4a7c15ULL));
    for (double& x : v) x += noise_sigma * normal(noise_rng);
    v = normalized(v);
  }
  return v;
}

nlohmann::json whitelist_to_json(const Whitelist& w) {
  nlohmann::json templates = nlohmann::json::object();
  for (const auto& t : w.templates()) templates[t.id] = t.embedding;
  return {{"width", w.width()}, {"templates", std::move(templates)}};
}

Whitelist whitelist_from_json(const nlohmann::json& j) {
  Whitelist w;
  const auto& templates = j.contains("templates") ? j.at("templates") : j;
  for (const auto& [id, e] : templates.items()) w.enroll(id, e.get<std::vector<double>>());
  return w;
}

std::vector<EmbeddingPair> pairs_from_json(const nlohmann::json& j) {
  std::vector<EmbeddingPair> out;
  for (const auto& p : j)
    out.push_back({p.at("probe").get<std::vector<double>>(), p.at("reference").get<std::vector<double>>()});
  return out;
}

nlohmann::json pairs_to_json(const std::vector<EmbeddingPair>& pairs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : pairs) out.push_back({{"probe", p.probe}, {"reference", p.reference}});
  return out;
}

std::string calibration_csv(const AclCalibration& c) {
  std::string out = "tau,far,frr,objective\n";
  char buf[160];
  for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
    const double obj = i < c.objective.size() ? c.objective[i] : std::nan("");
    std::snprintf(buf, sizeof buf, "%.6f,%.17g,%.17g,%.17g\n", c.thresholds[i], c.far[i], c.frr[i], obj);
    out += buf;
  }
  return out;
}

nlohmann::json calibration_summary(const AclCalibration& c) {
  return {{"lambda", c.lambda},
          {"latency_budget_ms", c.latency_budget_ms},
          {"latency_p90_ms", c.latency_p90_ms},
          {"tau_star", c.tau_star ? nlohmann::json(*c.tau_star) : nlohmann::json(nullptr)},
          {"feasible", c.feasible}};
}

}  // namespace xstack
