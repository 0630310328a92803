#include "xstack/population.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <random>

#include "xstack/error.hpp"
#include "xstack/matrix.hpp"

namespace xstack {
namespace {

constexpr std::array<const char*, 64> kFirst{
    "Alice",  "Bruno",   "Chloé",  "Dmitri", "Elena",   "Farid",  "Greta",   "Hiro",   "Ines",    "José",
    "Kamala", "Lukas",   "Mei",    "Nadia",  "Oskar",   "Priya",  "Quentin", "Rosa",   "Sven",    "Tariq",
    "Ulla",   "Viktor",  "Wanjiru", "Xavier", "Yasmin",  "Zoë",    "Amara",   "Bjorn",  "Celine",  "Dario",
    "Emeka",  "Fatima",  "Goran",  "Hanna",  "Ibrahim", "Jana",   "Kofi",    "Leila",  "Mateo",   "Noor",
    "Olga",   "Pavel",   "Renée",  "Sanjay", "Tomas",   "Uma",    "Vera",    "Wei",    "Ximena",  "Yusuf",
    "Zara",   "Anders",  "Beatriz", "Chidi", "Dagny",   "Esteban", "Freya",  "Gideon", "Helga",   "Ilya",
    "Juno",   "Kenji",   "Lorena", "Magnus"};

constexpr std::array<const char*, 64> kLast{
    "Okafor",    "Lindqvist", "Moreau",   "Petrov",    "Nakamura", "Haddad",   "Schmidt",  "Ferreira",
    "Kowalski",  "Müller",    "Osei",     "Brennan",   "Castillo", "Dubois",   "Eriksen",  "Fujita",
    "Gallagher", "Horvath",   "Ivanova",  "Jovanović", "Kimura",   "Larsen",   "Mbeki",    "Novak",
    "Oyelaran",  "Pereira",   "Quispe",   "Rahman",    "Sato",     "Tanaka",   "Ulrich",   "Vasquez",
    "Weiss",     "Xu",        "Yilmaz",   "Zielinski", "Abara",    "Bergstrom", "Chandra", "Delacroix",
    "Ekwueme",   "Fischer",   "Grünewald", "Hakimi",   "Ishikawa", "Jablonski", "Kovač",   "Lefèvre",
    "Mendoza",   "Nilsson",   "Ortega",   "Park",      "Qureshi",  "Rossi",    "Sokolov",  "Thorsen",
    "Uchenna",   "Varga",     "Wójcik",   "Yamada",    "Zapata",   "Achterberg", "Baptiste", "Ćosić"};

constexpr std::array<const char*, 16> kRoles{
    "chief engineer",   "staff nurse",     "data analyst",    "high school teacher",
    "bank teller",      "product manager", "graduate student", "police officer",
    "software developer", "pharmacist",    "journalist",      "architect",
    "paramedic",        "accountant",      "research chemist", "city planner"};

constexpr std::array<const char*, 64> kCompanies{
    "nordwind labs",     "bluecrest bank",    "solano clinic",     "orbitworks",       "maple county hospital",
    "quayside press",    "helix biotech",     "ironbridge partners", "lumen analytics", "cedar valley school",
    "tidewater logistics", "redkite studios", "arcturus systems",  "pinegate pharmacy", "silverline transit",
    "copperleaf design", "meridian insurance", "foxglove robotics", "granite peak bank", "willowmere college",
    "starling media",    "brightwater energy", "obsidian security", "juniper health",   "kestrel aerospace",
    "larkspur foods",    "northgate police",  "ember valley clinic", "cobalt dynamics", "harborview council",
    "saffron kitchens",  "vantage realty",    "thistle textiles",  "quarry hill mining", "riverbend library",
    "zephyr telecom",    "alder grove farms", "beacon street legal", "crescent optics", "driftwood hotels",
    "everglow lighting", "fernhill nursery",  "goldfinch audit",   "hollowbrook mills", "indigo freight",
    "jasper ridge labs", "kingfisher marine", "lodestar capital",  "moorland power",    "nettlefield brewing",
    "oakmont surgery",   "pebblestone games", "quill and ink books", "rowan tree software", "seabright dental",
    "tamarack outfitters", "umber clay works", "verdant gardens",  "whitlock motors",   "yarrow pharma",
    "zinnia fashion",    "amberline rail",    "bramble chemicals", "cinder cone bakery"};

constexpr std::array<const char*, 64> kStreets{
    "elm street",        "harbor lane",      "birch avenue",     "mill road",         "quarry close",
    "orchard way",       "station road",     "lantern row",      "chapel hill",       "fenwick drive",
    "garnet court",      "heron crescent",   "ivy terrace",      "juniper walk",      "kiln lane",
    "linden square",     "marsh road",       "nightingale way",  "olive grove",       "poplar street",
    "quince avenue",     "rampart street",   "sycamore lane",    "tanner row",        "upland road",
    "vicarage close",    "wharf street",     "yew tree court",   "acorn drive",       "bellfield road",
    "canal street",      "dovecote lane",    "elder place",      "foundry street",    "glebe road",
    "hawthorn way",      "inkerman street",  "jubilee terrace",  "kingsway",          "lavender hill",
    "meadow bank",       "newbridge road",   "oakfield avenue",  "primrose walk",     "quayside",
    "rosemary lane",     "saltmarsh road",   "tollgate drive",   "underhill court",   "valley view",
    "weaver street",     "yardley close",    "amber way",        "brook street",      "cobbler lane",
    "drayton road",      "ember close",      "farrier way",      "granary street",    "highfield road",
    "ironmonger row",    "jasmine court",    "keel street",      "lighthouse road"};

constexpr std::array<const char*, 4> kTitles{"Dr.", "Prof.", "Ms.", "Mr."};

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
  // explicit Fisher-Yates so the draw order does not depend on the library
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
  return p;
}

}  // namespace

const ProtectedProfile* Population::find(const std::string& id) const {
  for (const auto& p : profiles)
    if (p.entity_id == id) return &p;
  return nullptr;
}

const ProtectedProfile& Population::at(const std::string& id) const {
  if (const auto* p = find(id)) return *p;
  throw InvalidArgument("unknown identity: " + id);
}

std::size_t Population::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < profiles.size(); ++i)
    if (profiles[i].entity_id == id) return i;
  throw InvalidArgument("unknown identity: " + id);
}

Population generate_population(std::size_t n, std::uint64_t seed, std::optional<std::size_t> protected_count) {
  if (n < 2) throw InvalidArgument("population needs at least two identities");
  if (n > kFirst.size() * kLast.size()) throw InvalidArgument("population too large for the name tables");
  const std::size_t k = protected_count.value_or(std::max<std::size_t>(1, n / 2));
  if (k == 0 || k >= n) throw InvalidArgument("protected count must leave both groups non-empty");

  Population pop;
  pop.seed = seed;
  pop.protected_count = k;
  pop.data.identities = n;
  pop.data.seed = seed;
  const auto means = identity_means(pop.data);

  std::mt19937_64 rng(seed ^ 0x5bd1e995u);
  const auto first = permutation(kFirst.size(), rng);
  const auto last = permutation(kLast.size(), rng);
  const auto company = permutation(kCompanies.size(), rng);
  const auto street = permutation(kStreets.size(), rng);
  const HashTextEncoder encoder;

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t wrap = i / kFirst.size();
    const std::string f = kFirst[first[i % kFirst.size()]];
    const std::string l = kLast[last[(i + wrap) % kLast.size()]];
    ProtectedProfile p;
    p.entity_id = "identity-" + std::to_string(i);
    p.canonical_name = f + " " + l;
    p.aliases = {"@" + normalize(f) + normalize(l), std::string(kTitles[rng() % kTitles.size()]) + " " + l};
    p.attributes = {std::string(kRoles[rng() % kRoles.size()]) + " at " + kCompanies[company[i % kCompanies.size()]],
                    std::string("lives on ") + kStreets[street[i % kStreets.size()]]};
    p.visual = normalized(means[i]);
    std::string bag;
    for (const auto& a : p.attributes) bag += a + " ";
    p.textual = *encoder.encode(bag);
    p.protected_flag = i < k;
    pop.profiles.push_back(std::move(p));
  }
  return pop;
}

ToyTaskConfig population_task(const Population& population) {
  ToyTaskConfig c;
  c.data = population.data;
  c.forget_identities = population.protected_count;
  return c;
}

std::vector<double> capture_embedding(const Population& population, const std::string& id, double noise,
                                      std::uint64_t seed) {
  const auto& p = population.at(id);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, noise);
  std::vector<double> x = p.visual;
  for (double& v : x) v = v * population.data.mean_scale + normal(rng);
  return x;
}

nlohmann::json population_to_json(const Population& p) {
  return {{"seed", p.seed},
          {"protected_count", p.protected_count},
          {"data",
           {{"identities", p.data.identities},
            {"samples_per_identity", p.data.samples_per_identity},
            {"width", p.data.width},
            {"mean_scale", p.data.mean_scale},
            {"noise", p.data.noise},
            {"seed", p.data.seed}}},
          {"profiles", profiles_to_json(p.profiles)}};
}

Population population_from_json(const nlohmann::json& j) {
  Population p;
  p.seed = j.at("seed").get<std::uint64_t>();
  p.protected_count = j.at("protected_count").get<std::size_t>();
  const auto& d = j.at("data");
  p.data.identities = d.at("identities").get<std::size_t>();
  p.data.samples_per_identity = d.at("samples_per_identity").get<std::size_t>();
  p.data.width = d.at("width").get<std::size_t>();
  p.data.mean_scale = d.at("mean_scale").get<double>();
  p.data.noise = d.at("noise").get<double>();
  p.data.seed = d.at("seed").get<std::uint64_t>();
  p.profiles = profiles_from_json(j.at("profiles"));
  if (p.profiles.size() != p.data.identities) throw ConfigError("population profile count does not match its task");
  return p;
}

}  // namespace xstack
