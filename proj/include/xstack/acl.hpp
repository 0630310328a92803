#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace xstack {

struct IdentityTemplate {
  std::string id;
  std::vector<double> embedding;  // unit norm
};

// Enrolled identities allowed past the sensing boundary. Enrollment is
// single-writer; after freeze() the whitelist is read-only.
class Whitelist {
 public:
  // Stores the L2-normalised embedding. Throws InvalidArgument on a zero
  // vector, width mismatch or duplicate id, StateError once frozen.
  void enroll(const std::string& id, std::span<const double> embedding);
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  const std::vector<IdentityTemplate>& templates() const { return templates_; }
  bool empty() const { return templates_.empty(); }
  std::size_t width() const { return width_; }

 private:
  std::vector<IdentityTemplate> templates_;
  std::size_t width_ = 0;
  bool frozen_ = false;
};

using EnrollmentEntry = std::pair<std::string, std::vector<double>>;

Whitelist enroll(const std::vector<EnrollmentEntry>& entries);

struct AclDecision {
  bool grant = false;
  std::optional<std::string> matched_id;
  double similarity = -1.0;  // best cosine; -1 when the whitelist is empty
  double threshold = 0.0;
  double latency_us = 0.0;
};

// Open-set verification: best-matching template by cosine (ties to the
// lexicographically smallest id); grant iff that similarity >= tau.
AclDecision decide(std::span<const double> probe, const Whitelist& whitelist, double tau);

struct EmbeddingPair {
  std::vector<double> probe;
  std::vector<double> reference;
};

std::vector<double> pair_similarities(const std::vector<EmbeddingPair>& pairs);

struct AclCalibration {
  std::vector<double> thresholds;
  std::vector<double> far;
  std::vector<double> frr;
  std::vector<double> objective;  // filled by calibrate_threshold
  double lambda = 0.5;
  double latency_budget_ms = 50.0;
  double latency_p90_ms = 0.0;
  bool feasible = false;
  std::optional<double> tau_star;
};

// `points` uniform thresholds on [-1, 1].
std::vector<double> default_threshold_grid(std::size_t points = 1001);

// FAR(tau) = share of impostor similarities >= tau,
// FRR(tau) = share of genuine similarities < tau.
AclCalibration sweep_far_frr(std::span<const double> genuine, std::span<const double> impostor,
                             std::span<const double> thresholds);

struct CalibrationOutcome {
  bool feasible = false;
  std::optional<double> tau;
  double objective = 0.0;
  double latency_p90_ms = 0.0;
};

// Minimises lambda * FAR + (1 - lambda) * FRR over the grid (ties to the
// largest tau) subject to P90(latency) <= budget. An infeasible budget leaves
// tau unset. Results are also written back into `calibration`.
CalibrationOutcome calibrate_threshold(AclCalibration& calibration, double lambda,
                                       std::span<const double> latency_ms, double latency_budget_ms);

// Stand-in for an on-device face encoder.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<double> embed(const std::string& identity, double noise_sigma, std::uint64_t seed) const = 0;
  virtual std::size_t width() const = 0;
};

// Deterministic unit direction per identity plus seeded Gaussian noise,
// renormalised.
class SyntheticEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit SyntheticEmbeddingProvider(std::size_t width = 16, std::uint64_t base_seed = 0)
      : width_(width), base_seed_(base_seed) {}
  std::vector<double> embed(const std::string& identity, double noise_sigma, std::uint64_t seed) const override;
  std::size_t width() const override { return width_; }

 private:
  std::size_t width_;
  std::uint64_t base_seed_;
};

std::vector<double> synthetic_embedding(const std::string& identity, double noise_sigma, std::uint64_t seed,
                                        std::size_t width = 16);

nlohmann::json whitelist_to_json(const Whitelist& w);
Whitelist whitelist_from_json(const nlohmann::json& j);

std::vector<EmbeddingPair> pairs_from_json(const nlohmann::json& j);
nlohmann::json pairs_to_json(const std::vector<EmbeddingPair>& pairs);

// tau,far,frr,objective
std::string calibration_csv(const AclCalibration& c);
nlohmann::json calibration_summary(const AclCalibration& c);

}  // namespace xstack
