#include "dklab/config.hpp"

#include <cmath>
#include <fstream>

#include "dklab/error.hpp"

namespace dklab {

double TestFunctionSpec::operator()(std::span<const double> x) const {
  double ph = 0.0;
  for (std::size_t l = 0; l < mode.size(); ++l) ph += mode[l] * x[l];
  return is_sin ? std::sin(ph) : std::cos(ph);
}

double TestFunctionSpec::partial(int l, std::span<const double> x) const {
  double ph = 0.0;
  for (std::size_t k = 0; k < mode.size(); ++k) ph += mode[k] * x[k];
  const double m = mode[static_cast<std::size_t>(l)];
  return is_sin ? m * std::cos(ph) : -m * std::sin(ph);
}

namespace {

template <class T>
T get(const nlohmann::json& j, const char* section, const char* key, T fallback) {
  if (!j.contains(section)) return fallback;
  const auto& s = j.at(section);
  if (!s.is_object()) throw ConfigError(std::string(section) + ": expected an object");
  if (!s.contains(key) || s.at(key).is_null()) return fallback;
  try {
    return s.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(section) + "." + key + ": wrong type");
  }
}

template <class T>
T require(const nlohmann::json& j, const char* section, const char* key) {
  if (!j.contains(section) || !j.at(section).contains(key)) {
    throw ConfigError(std::string("missing required key ") + section + "." + key);
  }
  return get<T>(j, section, key, T{});
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  ExperimentConfig c;
  c.raw = j;
  c.d = require<int>(j, "grid", "d");
  c.L = require<int>(j, "grid", "L");
  c.L_fine = get(j, "grid", "L_fine", std::max(8 * c.L, 256));
  c.p = get(j, "grid", "p", 1);
  c.p_fine = get(j, "grid", "p_fine", 3);
  if (c.d < 1 || c.d > 3) throw ConfigError("grid.d must be 1, 2 or 3");
  if (c.L < 4 || c.L % 2) throw ConfigError("grid.L must be even and >= 4");
  if (c.L_fine < 4 * c.L || c.L_fine % c.L) throw ConfigError("grid.L_fine must be a multiple of grid.L and >= 4 L");
  if (c.p != 1 && c.p != 3) throw ConfigError("grid.p must be 1 or 3");
  if (c.p_fine != 1 && c.p_fine != 3) throw ConfigError("grid.p_fine must be 1 or 3");

  c.n_species = get(j, "model", "n_species", 1);
  c.sigma = get(j, "model", "sigma", std::vector<double>(static_cast<std::size_t>(c.n_species), 1.0));
  if (c.n_species < 1 || c.n_species > 15) throw ConfigError("model.n_species must be in 1..15");
  if (static_cast<int>(c.sigma.size()) != c.n_species) throw ConfigError("model.sigma must have n_species entries");
  for (double s : c.sigma)
    if (!(s > 0.0)) throw ConfigError("model.sigma entries must be positive");

  c.potential_family = get<std::string>(j, "potential", "family", "cosine");
  c.potential_width = get(j, "potential", "width", 4.0);
  c.potential_amplitude = get(j, "potential", "amplitude", 0.5);
  c.r_I = get(j, "potential", "r_I", 1.0);
  c.potential_amplitudes = get(j, "potential", "amplitudes", std::vector<double>{});

  c.initial.d = c.d;
  std::vector<int> e1(static_cast<std::size_t>(c.d), 0);
  e1[0] = 1;
  c.initial.modes = get(j, "initial", "modes", std::vector<std::vector<int>>{e1});
  c.initial.amps = get(j, "initial", "amplitudes", std::vector<double>(c.initial.modes.size(), 0.8));
  if (c.initial.amps.size() != c.initial.modes.size()) throw ConfigError("initial.amplitudes must match initial.modes");
  for (const auto& m : c.initial.modes)
    if (static_cast<int>(m.size()) != c.d) throw ConfigError("initial.modes entries must have d components");
  if (!(c.initial.min_bound() >= 0.0)) throw ConfigError("initial: density must be nonnegative (sum |a_k| <= 1)");

  c.N = get(j, "particles", "N", 4096);
  c.dt_particles = get(j, "particles", "dt", 1e-3);
  c.drift_method = get<std::string>(j, "particles", "drift", "auto");
  if (c.N < 1) throw ConfigError("particles.N must be >= 1");
  if (!(c.dt_particles > 0.0)) throw ConfigError("particles.dt must be positive");

  c.dt_dk = get(j, "dk", "dt", 0.0);
  c.dk_dt_factor = get(j, "dk", "dt_factor", 0.1);
  c.T = get(j, "meanfield", "T", 0.5);
  c.dt_meanfield = get(j, "meanfield", "dt", 0.0);
  c.dt_fine = get(j, "meanfield", "dt_fine", 0.0);
  if (!(c.T > 0.0)) throw ConfigError("meanfield.T must be positive");

  if (j.contains("tests") && j.at("tests").contains("functions")) {
    for (const auto& f : j.at("tests").at("functions")) {
      TestFunctionSpec t;
      if (!f.contains("mode")) throw ConfigError("missing required key tests.functions[].mode");
      t.mode = f.at("mode").get<std::vector<int>>();
      t.is_sin = f.value("kind", std::string("cos")) == "sin";
      t.T = f.value("T", c.T);
      t.species = f.value("species", -1);
      if (static_cast<int>(t.mode.size()) != c.d) throw ConfigError("tests.functions[].mode must have d components");
      if (t.T <= 0.0 || t.T > c.T + 1e-12) throw ConfigError("tests.functions[].T must lie in (0, meanfield.T]");
      c.tests.push_back(t);
    }
  } else {
    std::vector<int> m1(static_cast<std::size_t>(c.d), 0), m2(m1);
    m1[0] = 1;
    m2[0] = 2;
    c.tests = {{m1, false, c.T / 2, -1}, {m2, false, c.T, -1}};
  }

  c.delta0 = get(j, "monitor", "delta0", 0.12);
  c.eps = get(j, "monitor", "eps", 0.0);
  c.delta = get(j, "monitor", "delta", 0.0);
  if (!(c.delta0 > 0.0 && c.delta0 < 1.0)) throw ConfigError("monitor.delta0 must lie in (0, 1)");
  if (c.monitor_eps() >= c.delta0 / 4 || c.monitor_delta() >= c.delta0 / 4) {
    throw ConfigError("monitor.eps and monitor.delta must lie in (0, delta0 / 4)");
  }

  c.replicas = get(j, "study", "replicas", 200);
  c.N_values = get(j, "study", "N_values", std::vector<int>{});
  c.L_values = get(j, "study", "L_values", std::vector<int>{});
  c.kind = get<std::string>(j, "study", "kind", "mfl-consistency");
  c.M_cut = get(j, "study", "M_cut", 16);
  if (c.replicas < 1) throw ConfigError("study.replicas must be >= 1");

  c.distance_j = get(j, "distance", "j", 3);
  c.n_features = get(j, "distance", "n_features", 512);
  c.n_bootstrap = get(j, "distance", "n_bootstrap", 200);
  c.feature_scale = get(j, "distance", "feature_scale", 1.0);

  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("output")) c.output = j.at("output").get<std::string>();
  if (j.contains("threads")) c.threads = j.at("threads").get<int>();

  (void)c.potentials();
  (void)c.drift();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

PotentialMatrix ExperimentConfig::potentials() const {
  const auto fam = parse_potential_family(potential_family);
  std::vector<double> amps = potential_amplitudes;
  if (amps.empty()) amps.assign(static_cast<std::size_t>(n_species * n_species), potential_amplitude);
  return PotentialMatrix(d, n_species, fam, potential_width, r_I, amps);
}

MeanFieldModel ExperimentConfig::model(int order) const { return MeanFieldModel{potentials(), sigma, order}; }

std::vector<SmoothFunction> ExperimentConfig::initial_densities() const {
  return std::vector<SmoothFunction>(static_cast<std::size_t>(n_species), initial);
}

std::vector<double> ExperimentConfig::initial_sup_bounds() const {
  return std::vector<double>(static_cast<std::size_t>(n_species), initial.sup_bound());
}

DriftMethod ExperimentConfig::drift() const {
  if (drift_method == "auto") return DriftMethod::automatic;
  if (drift_method == "direct") return DriftMethod::direct;
  if (drift_method == "binned") return DriftMethod::binned;
  if (drift_method == "spectral") return DriftMethod::spectral;
  throw ConfigError("particles.drift must be one of auto, direct, binned, spectral");
}

double ExperimentConfig::dk_dt(int L_grid) const {
  if (dt_dk > 0.0) return dt_dk;
  double s = 0.0;
  for (double v : sigma) s = std::max(s, v);
  const double h = kTwoPi / L_grid;
  return dk_dt_factor * h * h / s;
}

double ExperimentConfig::meanfield_dt(int L_grid) const {
  double s = 0.0;
  for (double v : sigma) s = std::max(s, v);
  const double h = kTwoPi / L_grid;
  return 0.1 * h * h / s;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json tj = nlohmann::json::array();
  for (const auto& t : tests) tj.push_back({{"mode", t.mode}, {"kind", t.is_sin ? "sin" : "cos"}, {"T", t.T}, {"species", t.species}});
  return {
      {"grid", {{"d", d}, {"L", L}, {"L_fine", L_fine}, {"p", p}, {"p_fine", p_fine}}},
      {"model", {{"n_species", n_species}, {"sigma", sigma}}},
      {"potential", {{"family", potential_family}, {"width", potential_width}, {"amplitude", potential_amplitude},
                     {"r_I", r_I}, {"amplitudes", potential_amplitudes}}},
      {"initial", {{"modes", initial.modes}, {"amplitudes", initial.amps}}},
      {"particles", {{"N", N}, {"dt", dt_particles}, {"drift", drift_method}}},
      {"dk", {{"dt", dt_dk}, {"dt_factor", dk_dt_factor}}},
      {"meanfield", {{"T", T}, {"dt", dt_meanfield}, {"dt_fine", dt_fine}}},
      {"tests", {{"functions", tj}}},
      {"monitor", {{"delta0", delta0}, {"eps", monitor_eps()}, {"delta", monitor_delta()}}},
      {"study", {{"replicas", replicas}, {"N_values", N_values}, {"L_values", L_values}, {"kind", kind}, {"M_cut", M_cut}}},
      {"distance", {{"j", distance_j}, {"n_features", n_features}, {"n_bootstrap", n_bootstrap}, {"feature_scale", feature_scale}}},
      {"seed", seed},
  };
}

nlohmann::json scaling_audit(double N, double h, int d, double r_I, double T, double delta0) {
  const double a = std::pow(N, 1.0 - delta0) * std::pow(h, d);
  const double b = std::pow(N, delta0 * (T + 1.0)) * h;
  const double c = std::pow(r_I, -2.0 * (d + 2));
  const double logN = std::log(N);
  auto row = [](const char* rel, double lhs, double rhs, bool ok) {
    return nlohmann::json{{"relation", rel}, {"lhs", lhs}, {"rhs", rhs}, {"status", ok ? "satisfied" : "violated"}};
  };
  return nlohmann::json::array({
      row("N^(1-delta0) h^d >= 1", a, 1.0, a >= 1.0),
      row("N^(delta0 (T+1)) h <= 1", b, 1.0, b <= 1.0),
      row("r_I^(-2(d+2)) <= log N", c, logN, c <= logN),
  });
}

}  // namespace dklab
