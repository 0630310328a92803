#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xstack/dataset.hpp"
#include "xstack/guardrail.hpp"

namespace xstack {

// Synthetic cast for attack simulations. Identity i is "identity-<i>" and
// shares its visual direction with cluster i of the recognition task, so the
// ACL templates, guardrail profiles and toy model agree on who is who.
// Identities 0 .. protected_count-1 are protected.
struct Population {
  std::uint64_t seed = 0;
  std::size_t protected_count = 0;
  IdentityDatasetConfig data;  // the recognition task's clusters
  std::vector<ProtectedProfile> profiles;

  std::size_t size() const { return profiles.size(); }
  const ProtectedProfile& at(const std::string& id) const;
  const ProtectedProfile* find(const std::string& id) const;
  std::size_t index_of(const std::string& id) const;
};

// n >= 2; protected_count defaults to max(1, n / 2). Throws InvalidArgument
// otherwise.
Population generate_population(std::size_t n, std::uint64_t seed, std::optional<std::size_t> protected_count = {});

// Recognition task matching the population: one class per identity, the
// protected identities forming the forget set.
ToyTaskConfig population_task(const Population& population);

// Noisy capture of an identity's face embedding for a sensing event.
std::vector<double> capture_embedding(const Population& population, const std::string& id, double noise,
                                      std::uint64_t seed);

nlohmann::json population_to_json(const Population& p);
Population population_from_json(const nlohmann::json& j);

}  // namespace xstack
