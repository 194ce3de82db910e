#include "crowdalloc/market.hpp"

#include <string>

namespace crowdalloc {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) {
    throw InvalidConfig("invalid config: " + what);
  }
}

void require_bounds(const Bounds& b, const std::string& name) {
  require(std::isfinite(b.lo) && std::isfinite(b.hi), name + " bounds must be finite");
  require(b.lo > 0.0, name + "_min must be positive");
  require(b.lo <= b.hi, name + "_min must not exceed " + name + "_max");
}

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                       static_cast<std::uint32_t>(b)};
}

constexpr std::uint64_t kPopulationStream = 0x706f70756c617465ULL;
constexpr std::uint64_t kOutcomeStream = 0x6f7574636f6d6573ULL;

double uniform_in(const Bounds& range, std::mt19937_64& rng) {
  const double u = std::generate_canonical<double, 53>(rng);
  return range.lo + (range.hi - range.lo) * u;
}

}  // namespace

MarketConfig validate_config(MarketConfig cfg) {
  require(cfg.workers >= 1, "workers must be at least 1");
  require(cfg.jobs >= 0, "jobs must be non-negative");
  require_bounds(cfg.cost, "cost");
  require_bounds(cfg.rho, "rho");
  require_bounds(cfg.beta, "beta");
  require(cfg.epsilon > 0.0 && cfg.epsilon < 1.0, "epsilon must lie in (0, 1)");
  require(cfg.deadline > 0.0 && std::isfinite(cfg.deadline), "deadline must be positive");
  require(cfg.delta > 0.0, "delta must be positive");
  require(cfg.delta < cfg.beta.lo, "delta must be strictly below beta_min");
  require(cfg.sigma_log >= 0.0 && std::isfinite(cfg.sigma_log), "sigma_log must be non-negative");
  return cfg;
}

BidProfile BidProfile::truthful(std::span<const WorkerProfile> workers) {
  return BidProfile{costs_of(workers)};
}

void validate_bids(const BidProfile& profile, const MarketConfig& cfg) {
  require(profile.bids.size() == cfg.workers, "bid profile length must equal worker count");
  for (Index i = 0; i < profile.bids.size(); ++i) {
    require(cfg.cost.contains(profile.bids[i]),
            "bid of worker " + std::to_string(i) + " lies outside [cost_min, cost_max]");
  }
}

VectorXd costs_of(std::span<const WorkerProfile> workers) {
  VectorXd costs(static_cast<Index>(workers.size()));
  for (std::size_t i = 0; i < workers.size(); ++i) {
    costs[static_cast<Index>(i)] = workers[i].cost;
  }
  return costs;
}

Index PopulationRecipe::size() const {
  Index total = 0;
  for (const auto& g : groups) {
    total += g.count;
  }
  return total;
}

PopulationRecipe PopulationRecipe::high_and_mediocre(Index good, Index mediocre) {
  PopulationRecipe recipe;
  if (good > 0) {
    recipe.groups.push_back({good, {10.0, 50.0}, {50.0, 75.0}, {30.0, 35.0}});
  }
  if (mediocre > 0) {
    recipe.groups.push_back({mediocre, {100.0, 100.0}, {100.0, 100.0}, {25.0, 25.0}});
  }
  return recipe;
}

void validate_recipe(const PopulationRecipe& recipe, const MarketConfig& cfg) {
  if (recipe.size() != cfg.workers) {
    throw InvalidRecipe("invalid recipe: group counts sum to " + std::to_string(recipe.size()) +
                        " but the market has " + std::to_string(cfg.workers) + " workers");
  }
  for (std::size_t g = 0; g < recipe.groups.size(); ++g) {
    const auto& group = recipe.groups[g];
    const std::string tag = "invalid recipe: group " + std::to_string(g);
    if (group.count < 0) {
      throw InvalidRecipe(tag + " has a negative count");
    }
    if (group.cost.lo > group.cost.hi || !cfg.cost.contains(group.cost)) {
      throw InvalidRecipe(tag + " cost range exceeds the configured bounds");
    }
    if (group.rho.lo > group.rho.hi || !cfg.rho.contains(group.rho)) {
      throw InvalidRecipe(tag + " rho range exceeds the configured bounds");
    }
    if (group.beta.lo > group.beta.hi || !cfg.beta.contains(group.beta)) {
      throw InvalidRecipe(tag + " beta range exceeds the configured bounds");
    }
  }
}

std::vector<WorkerProfile> sample_population(const MarketConfig& cfg, const PopulationRecipe& recipe) {
  validate_recipe(recipe, cfg);
  auto seq = make_seed_seq(cfg.seed, kPopulationStream, 0);
  std::mt19937_64 rng(seq);
  std::vector<WorkerProfile> workers;
  workers.reserve(static_cast<std::size_t>(cfg.workers));
  for (const auto& group : recipe.groups) {
    for (Index k = 0; k < group.count; ++k) {
      WorkerProfile w;
      w.id = static_cast<Index>(workers.size());
      w.cost = uniform_in(group.cost, rng);
      w.mjct = uniform_in(group.rho, rng);
      w.mttf = uniform_in(group.beta, rng);
      workers.push_back(w);
    }
  }
  return workers;
}

OutcomeDraw sample_outcome(const WorkerProfile& worker, double fraction, const MarketConfig& cfg,
                           std::mt19937_64& rng) {
  // Both draws are always taken so a stream advances identically whatever the parameters.
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::exponential_distribution<double> ttf(1.0 / worker.mttf);
  const double z = gauss(rng);
  const double time_to_failure = ttf(rng);

  double full_job_time = worker.mjct;
  if (cfg.sigma_log > 0.0) {
    const double location = std::log(worker.mjct) - 0.5 * cfg.sigma_log * cfg.sigma_log;
    full_job_time = std::exp(location + cfg.sigma_log * z);
  }

  OutcomeDraw draw;
  draw.completion_time = fraction * full_job_time;
  if (draw.completion_time >= cfg.delta) {
    draw.window = time_to_failure < cfg.delta ? Window::Failed : Window::Survived;
  }
  return draw;
}

WorkerStreams::WorkerStreams(std::uint64_t master_seed, Index workers) {
  streams_.reserve(static_cast<std::size_t>(workers));
  for (Index i = 0; i < workers; ++i) {
    auto seq = make_seed_seq(master_seed, kOutcomeStream, static_cast<std::uint64_t>(i));
    streams_.emplace_back(seq);
  }
}

}  // namespace crowdalloc
