#include "ribbo/config.hpp"

#include <fstream>
#include <sstream>

namespace ribbo {

namespace {

Json vec_to_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_json(const Json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + " must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(std::string(what) + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Json interval_to_json(const Interval& r) { return Json::array({r.lo, r.hi}); }

Interval interval_from_json(const Json& j, const char* what) {
  if (j.is_number()) return {j.get<double>(), j.get<double>()};
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError(std::string(what) + " must be [lo, hi]");
  }
  Interval r{j[0].get<double>(), j[1].get<double>()};
  if (r.lo > r.hi) throw ConfigError(std::string(what) + " has lo > hi");
  return r;
}

}  // namespace

Json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Json search_space_to_json(const SearchSpace& s) {
  return {{"lower", vec_to_json(s.lower())}, {"upper", vec_to_json(s.upper())}};
}

SearchSpace search_space_from_json(const Json& j) {
  try {
    return SearchSpace(vec_from_json(j.at("lower"), "space.lower"),
                       vec_from_json(j.at("upper"), "space.upper"));
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("invalid search space: ") + e.what());
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("search space needs 'lower' and 'upper'");
  }
}

Json rover_config_to_json(const RoverConfig& r) {
  return {{"penalty_weight", r.penalty_weight},
          {"offset", r.offset},
          {"start", r.start},
          {"goal", r.goal},
          {"n_obstacles", r.n_obstacles},
          {"obstacle_height", r.obstacle_height},
          {"obstacle_width", r.obstacle_width},
          {"map_seed", r.map_seed},
          {"n_samples", r.n_samples}};
}

RoverConfig rover_config_from_json(const Json& j) {
  RoverConfig r;
  r.penalty_weight = get_or(j, "penalty_weight", r.penalty_weight);
  r.offset = get_or(j, "offset", r.offset);
  r.start = get_or(j, "start", r.start);
  r.goal = get_or(j, "goal", r.goal);
  r.n_obstacles = get_or(j, "n_obstacles", r.n_obstacles);
  r.obstacle_height = get_or(j, "obstacle_height", r.obstacle_height);
  r.obstacle_width = get_or(j, "obstacle_width", r.obstacle_width);
  r.map_seed = get_or(j, "map_seed", r.map_seed);
  r.n_samples = get_or(j, "n_samples", r.n_samples);
  if (r.n_samples < 2) throw ConfigError("rover n_samples must be at least 2");
  return r;
}

Json distribution_to_json(const TaskDistribution& d) {
  Json j = {{"name", d.name},
            {"base", std::string(to_string(d.base))},
            {"space", search_space_to_json(d.space)},
            {"translation_range", interval_to_json(d.translation_range)},
            {"scaling_range", interval_to_json(d.scaling_range)},
            {"master_seed", d.master_seed}};
  if (d.base == BaseFunction::Rover2D) j["rover"] = rover_config_to_json(d.rover);
  return j;
}

TaskDistribution distribution_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("distribution entry must be an object");
  TaskDistribution d;
  d.name = require<std::string>(j, "name");
  try {
    d.base = base_function_from_string(require<std::string>(j, "base"));
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (j.contains("space")) {
    d.space = search_space_from_json(j.at("space"));
  } else {
    const int dim = get_or(j, "dim", d.base == BaseFunction::Rover2D ? 60 : 2);
    if (dim < 1) throw ConfigError("distribution dim must be positive");
    d.space = default_space(d.base, dim);
  }
  if (j.contains("translation_range")) {
    d.translation_range = interval_from_json(j.at("translation_range"), "translation_range");
  }
  if (j.contains("scaling_range")) {
    d.scaling_range = interval_from_json(j.at("scaling_range"), "scaling_range");
  }
  d.master_seed = get_or<std::uint64_t>(j, "master_seed", 0);
  if (j.contains("rover")) d.rover = rover_config_from_json(j.at("rover"));
  try {
    d.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return d;
}

Json manifest_to_json(const DatasetManifest& m) {
  Json dists = Json::array();
  for (const auto& d : m.distributions) dists.push_back(distribution_to_json(d));
  Json algos = Json::array();
  for (auto a : m.algorithms) algos.push_back(std::string(to_string(a)));
  Json tasks = Json::array();
  for (const auto& t : m.tasks) {
    tasks.push_back({{"distribution", t.ref.distribution},
                     {"index", t.ref.index},
                     {"y_min", t.y_min},
                     {"y_max", t.y_max},
                     {"optimum_proxy", t.optimum_proxy}});
  }
  Json files = Json::array();
  for (const auto& f : m.files) {
    files.push_back({{"path", f.path},
                     {"algorithm", std::string(to_string(f.algo))},
                     {"distribution", f.distribution},
                     {"n_trajectories", f.n_trajectories},
                     {"checksum", f.checksum}});
  }
  return {{"format", "ribbo-dataset"},
          {"version", m.version},
          {"budget", m.budget},
          {"base_seed", m.base_seed},
          {"distributions", dists},
          {"algorithms", algos},
          {"tasks", tasks},
          {"files", files}};
}

DatasetManifest manifest_from_json(const Json& j) {
  DatasetManifest m;
  try {
    if (j.value("format", std::string()) != "ribbo-dataset") {
      throw FormatError("manifest is not a ribbo dataset manifest");
    }
    m.version = j.at("version").get<int>();
    if (m.version != DatasetManifest::kVersion) {
      throw FormatError("unsupported dataset version " + std::to_string(m.version));
    }
    m.budget = j.at("budget").get<int>();
    m.base_seed = j.at("base_seed").get<std::uint64_t>();
    for (const auto& d : j.at("distributions")) m.distributions.push_back(distribution_from_json(d));
    for (const auto& a : j.at("algorithms")) {
      m.algorithms.push_back(behavior_from_string(a.get<std::string>()));
    }
    for (const auto& t : j.at("tasks")) {
      TaskStats s;
      s.ref.distribution = t.at("distribution").get<std::string>();
      s.ref.index = t.at("index").get<std::int64_t>();
      s.y_min = t.at("y_min").get<double>();
      s.y_max = t.at("y_max").get<double>();
      s.optimum_proxy = t.at("optimum_proxy").get<double>();
      m.tasks.push_back(s);
    }
    for (const auto& f : j.at("files")) {
      DatasetFile df;
      df.path = f.at("path").get<std::string>();
      df.algo = behavior_from_string(f.at("algorithm").get<std::string>());
      df.distribution = f.at("distribution").get<std::string>();
      df.n_trajectories = f.at("n_trajectories").get<std::size_t>();
      df.checksum = f.at("checksum").get<std::string>();
      if (df.path.find('/') != std::string::npos || df.path.find("..") != std::string::npos) {
        throw FormatError("manifest file path escapes the dataset directory: " + df.path);
      }
      m.files.push_back(std::move(df));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

Json model_config_to_json(const ModelConfig& c) {
  return {{"x_dim", c.x_dim},
          {"embed_dim", c.embed_dim},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"ff_dim", c.ff_dim},
          {"dropout", c.dropout},
          {"max_len", c.max_len},
          {"variant", std::string(to_string(c.variant))},
          {"min_std", c.min_std},
          {"max_std", c.max_std},
          {"n_algos", c.n_algos}};
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  c.x_dim = get_or(j, "x_dim", c.x_dim);
  c.embed_dim = get_or(j, "embed_dim", c.embed_dim);
  c.n_layers = get_or(j, "n_layers", c.n_layers);
  c.n_heads = get_or(j, "n_heads", c.n_heads);
  c.ff_dim = get_or(j, "ff_dim", c.ff_dim);
  c.dropout = get_or(j, "dropout", c.dropout);
  c.max_len = get_or(j, "max_len", c.max_len);
  c.variant = model_variant_from_string(get_or<std::string>(j, "variant", "ribbo"));
  c.min_std = get_or(j, "min_std", c.min_std);
  c.max_std = get_or(j, "max_std", c.max_std);
  c.n_algos = get_or(j, "n_algos", c.n_algos);
  c.validate();
  return c;
}

Json training_meta_to_json(const TrainingMeta& m) {
  Json excluded = Json::array();
  for (auto a : m.excluded_algorithms) excluded.push_back(std::string(to_string(a)));
  Json dists = Json::array();
  for (const auto& d : m.distributions) dists.push_back(distribution_to_json(d));
  return {{"step", m.step},
          {"seed", m.seed},
          {"tau", m.tau},
          {"y_normalization", std::string(to_string(m.y_normalization))},
          {"excluded_algorithms", excluded},
          {"distributions", dists}};
}

TrainingMeta training_meta_from_json(const Json& j) {
  TrainingMeta m;
  m.step = get_or<std::int64_t>(j, "step", 0);
  m.seed = get_or<std::uint64_t>(j, "seed", 0);
  m.tau = get_or(j, "tau", 0);
  m.y_normalization = y_normalization_from_string(get_or<std::string>(j, "y_normalization", "random"));
  if (j.contains("excluded_algorithms")) {
    for (const auto& a : j.at("excluded_algorithms")) {
      m.excluded_algorithms.push_back(behavior_from_string(a.get<std::string>()));
    }
  }
  if (j.contains("distributions")) {
    for (const auto& d : j.at("distributions")) m.distributions.push_back(distribution_from_json(d));
  }
  return m;
}

Json behavior_options_to_json(const BehaviorOptions& o) {
  Json j = {{"budget_hint", o.budget_hint},
            {"regevo_population", o.regevo_population},
            {"regevo_tournament", o.regevo_tournament},
            {"firefly",
             {{"population", o.firefly.population},
              {"attraction", o.firefly.attraction},
              {"absorption", o.firefly.absorption},
              {"perturbation", o.firefly.perturbation}}},
            {"cma_es", {{"initial_sigma_fraction", o.cmaes.initial_sigma_fraction}}},
            {"gp_ei",
             {{"noise_variance", o.gp.noise_variance},
              {"n_candidates", o.gp.n_candidates},
              {"n_refine", o.gp.n_refine},
              {"refit_every", o.gp.refit_every}}}};
  if (o.cmaes.population_size) j["cma_es"]["population_size"] = *o.cmaes.population_size;
  if (o.gp.warm_start) j["gp_ei"]["warm_start"] = *o.gp.warm_start;
  return j;
}

BehaviorOptions behavior_options_from_json(const Json& j) {
  BehaviorOptions o;
  o.budget_hint = get_or(j, "budget_hint", o.budget_hint);
  o.regevo_population = get_or(j, "regevo_population", o.regevo_population);
  o.regevo_tournament = get_or(j, "regevo_tournament", o.regevo_tournament);
  if (j.contains("firefly")) {
    const auto& f = j.at("firefly");
    o.firefly.population = get_or(f, "population", o.firefly.population);
    o.firefly.attraction = get_or(f, "attraction", o.firefly.attraction);
    o.firefly.absorption = get_or(f, "absorption", o.firefly.absorption);
    o.firefly.perturbation = get_or(f, "perturbation", o.firefly.perturbation);
  }
  if (j.contains("cma_es")) {
    const auto& c = j.at("cma_es");
    if (c.contains("population_size")) o.cmaes.population_size = c.at("population_size").get<int>();
    o.cmaes.initial_sigma_fraction =
        get_or(c, "initial_sigma_fraction", o.cmaes.initial_sigma_fraction);
  }
  if (j.contains("gp_ei")) {
    const auto& g = j.at("gp_ei");
    o.gp.noise_variance = get_or(g, "noise_variance", o.gp.noise_variance);
    o.gp.n_candidates = get_or(g, "n_candidates", o.gp.n_candidates);
    o.gp.n_refine = get_or(g, "n_refine", o.gp.n_refine);
    o.gp.refit_every = get_or(g, "refit_every", o.gp.refit_every);
    if (g.contains("warm_start")) o.gp.warm_start = g.at("warm_start").get<int>();
  }
  if (o.budget_hint < 1 || o.regevo_population < 1 || o.regevo_tournament < 1 ||
      o.regevo_tournament > o.regevo_population || o.firefly.population < 2) {
    throw ConfigError("invalid behavior options");
  }
  return o;
}

}  // namespace ribbo
