#include "crowdalloc/config_io.hpp"

#include "crowdalloc/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace crowdalloc {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw InvalidConfig("invalid config: cannot parse '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

double parse_double(std::string_view key, std::string_view text) {
  text = trim(text);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || !std::isfinite(value)) {
    bad_value(key, text);
  }
  return value;
}

long parse_count(std::string_view key, std::string_view text) {
  const double value = parse_double(key, text);
  if (value != std::floor(value) || value < 0.0 || value > 9.0e15) {
    bad_value(key, text);
  }
  return static_cast<long>(value);
}

std::uint64_t parse_seed(std::string_view key, std::string_view text) {
  text = trim(text);
  std::uint64_t value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    bad_value(key, text);
  }
  return value;
}

Bounds parse_range(std::string_view key, std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    const double v = parse_double(key, text);
    return {v, v};
  }
  return {parse_double(key, text.substr(0, colon)), parse_double(key, text.substr(colon + 1))};
}

WorkerGroup parse_group(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    parts.push_back(trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start)));
    if (comma == std::string_view::npos) {
      break;
    }
    start = comma + 1;
  }
  if (parts.size() != 4) {
    throw InvalidConfig("invalid config: group expects 'COUNT, COST, RHO, BETA', got '" + std::string(text) + "'");
  }
  WorkerGroup g;
  g.count = parse_count("group", parts[0]);
  g.cost = parse_range("group", parts[1]);
  g.rho = parse_range("group", parts[2]);
  g.beta = parse_range("group", parts[3]);
  return g;
}

}  // namespace

EstimatorConfig ExperimentConfig::estimator() const {
  EstimatorConfig est = EstimatorConfig::for_market(market);
  if (u_rho) {
    est.u_rho = *u_rho;
  }
  if (u_beta) {
    est.u_beta = *u_beta;
  }
  est.alpha = alpha;
  return est;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  auto& m = cfg.market;
  if (key == "workers") {
    m.workers = parse_count(key, value);
  } else if (key == "jobs") {
    m.jobs = parse_count(key, value);
  } else if (key == "deadline") {
    m.deadline = parse_double(key, value);
  } else if (key == "epsilon") {
    m.epsilon = parse_double(key, value);
  } else if (key == "delta") {
    m.delta = parse_double(key, value);
  } else if (key == "sigma_log") {
    m.sigma_log = parse_double(key, value);
  } else if (key == "seed") {
    m.seed = parse_seed(key, value);
  } else if (key == "cost_min") {
    m.cost.lo = parse_double(key, value);
  } else if (key == "cost_max") {
    m.cost.hi = parse_double(key, value);
  } else if (key == "rho_min") {
    m.rho.lo = parse_double(key, value);
  } else if (key == "rho_max") {
    m.rho.hi = parse_double(key, value);
  } else if (key == "beta_min") {
    m.beta.lo = parse_double(key, value);
  } else if (key == "beta_max") {
    m.beta.hi = parse_double(key, value);
  } else if (key == "u_rho") {
    cfg.u_rho = parse_double(key, value);
  } else if (key == "u_beta") {
    cfg.u_beta = parse_double(key, value);
  } else if (key == "alpha") {
    cfg.alpha = parse_double(key, value);
  } else if (key == "group") {
    cfg.recipe.groups.push_back(parse_group(value));
  } else {
    throw InvalidConfig("invalid config: unknown key '" + std::string(key) + "'");
  }
}

ExperimentConfig parse_experiment_config(std::istream& in, std::string_view source) {
  ExperimentConfig cfg;
  cfg.market.workers = -1;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text(line);
    if (const auto hash = text.find('#'); hash != std::string_view::npos) {
      text = text.substr(0, hash);
    }
    text = trim(text);
    if (text.empty()) {
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidConfig("invalid config: " + std::string(source) + ":" + std::to_string(line_no) +
                          ": expected 'key = value'");
    }
    try {
      apply_setting(cfg, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    } catch (const InvalidConfig& e) {
      throw InvalidConfig(std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }

  auto& m = cfg.market;
  if (cfg.recipe.groups.empty()) {
    if (m.workers < 0) {
      throw InvalidConfig("invalid config: " + std::string(source) + ": neither 'workers' nor any 'group' given");
    }
    cfg.recipe.groups.push_back({m.workers, m.cost, m.rho, m.beta});
  } else if (m.workers < 0) {
    m.workers = cfg.recipe.size();
  }
  validate_config(m);
  try {
    validate_recipe(cfg.recipe, m);
  } catch (const InvalidRecipe& e) {
    throw InvalidConfig(std::string(source) + ": " + e.what());
  }
  validate_estimator(cfg.estimator(), m);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidConfig("invalid config: cannot open config file '" + path.string() + "'");
  }
  return parse_experiment_config(in, path.string());
}

void write_population_csv(std::ostream& out, std::span<const WorkerProfile> workers) {
  out << "id,cost,mjct,mttf\n";
  for (const auto& w : workers) {
    out << w.id << ',' << format_number(w.cost) << ',' << format_number(w.mjct) << ',' << format_number(w.mttf)
        << '\n';
  }
}

nlohmann::json to_json(const MarketConfig& m) {
  return {
      {"workers", m.workers},     {"jobs", m.jobs},         {"deadline", m.deadline},
      {"epsilon", m.epsilon},     {"delta", m.delta},       {"sigma_log", m.sigma_log},
      {"seed", m.seed},           {"cost_min", m.cost.lo},  {"cost_max", m.cost.hi},
      {"rho_min", m.rho.lo},      {"rho_max", m.rho.hi},    {"beta_min", m.beta.lo},
      {"beta_max", m.beta.hi},
  };
}

nlohmann::json to_json(const EstimatorConfig& e) {
  return {{"u_rho", e.u_rho}, {"u_beta", e.u_beta}, {"alpha", e.alpha}, {"delta", e.delta}};
}

}  // namespace crowdalloc
