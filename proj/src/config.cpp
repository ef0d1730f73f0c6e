#include "letf/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace letf {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, FilterId> kFilterNames = {
    {"perfect", FilterId::Perfect}, {"obs_only", FilterId::ObsOnly},
    {"sir", FilterId::Sir},         {"enkf", FilterId::Enkf},
    {"esrf", FilterId::Esrf},       {"etpf", FilterId::Etpf},
    {"etpf_r0", FilterId::EtpfR0},  {"stochastic_etpf", FilterId::StochasticEtpf},
    {"letkf", FilterId::Letkf},     {"letpf", FilterId::LocalizedEtpf}};

const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"model", {"name", "dim", "sigma", "rho", "beta", "forcing", "dx"}},
    {"integrator", {"dt", "tol", "max_iters"}},
    {"observation", {"indices", "variance", "interval"}},
    {"filter", {"name", "ensemble_size", "inflation", "rejuvenation", "epsilon", "perturbed_obs"}},
    {"localization", {"kernel", "r_loc_R", "r_loc_c", "units", "length"}},
    {"run", {"cycles", "discard", "spinup", "seed", "init_spread", "reference_perturbation",
             "divergence_threshold", "divergence_window", "component_normalized_rmse", "timing"}},
    {"sweep", {"param1", "values1", "param2", "values2"}},
    {"qmc", {"sizes", "reference_size", "obs_variance", "shifts", "repeats", "stochastic_etpf"}},
    {"smoother", {"a", "m0", "p0", "r", "steps", "samples", "mcmc_samples", "burn_in", "proposal_std"}}};

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = lower(trim(text));
  if (t == "inf" || t == "infinity") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' is not a number: " + text);
  }
}

Index parse_index(const std::string& key, const std::string& text) {
  const double v = parse_double(key, text);
  if (!std::isfinite(v) || v != std::floor(v)) throw ConfigError("config: '" + key + "' must be an integer");
  return static_cast<Index>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = lower(trim(text));
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("config: '" + key + "' is not a boolean: " + text);
}

std::vector<Index> parse_indices(const std::string& text, Index dim) {
  const std::string t = lower(trim(text));
  std::vector<Index> out;
  if (t == "all" || t == "odd" || t == "even") {
    for (Index j = 0; j < dim; ++j)
      if (t == "all" || (t == "odd") == (j % 2 == 1)) out.push_back(j);
    return out;
  }
  for (double v : parse_value_list(text)) {
    if (v != std::floor(v) || v < 0) throw ConfigError("config: observation indices must be nonnegative integers");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

std::string join(const std::vector<Index>& v) {
  std::ostringstream os;
  for (std::size_t k = 0; k < v.size(); ++k) os << (k ? "," : "") << v[k];
  return os.str();
}

}  // namespace

std::string to_string(ModelId id) { return id == ModelId::Lorenz63 ? "lorenz63" : "lorenz96"; }

std::string to_string(FilterId id) {
  for (const auto& [name, value] : kFilterNames)
    if (value == id) return name;
  return "unknown";
}

FilterId parse_filter_id(const std::string& name) {
  const auto it = kFilterNames.find(lower(trim(name)));
  if (it == kFilterNames.end()) throw ConfigError("config: unknown filter '" + name + "'");
  return it->second;
}

OdeModel ExperimentConfig::make_model() const {
  return model == ModelId::Lorenz63 ? make_lorenz63(l63) : make_lorenz96(dim, l96);
}

ObservationModel ExperimentConfig::make_observation_model() const {
  const GridGeometry g = grid();
  std::vector<double> locations;
  for (Index j : obs_indices) locations.push_back(g.position(j));
  return ObservationModel::selection(obs_indices, Vector::Constant(static_cast<Index>(obs_indices.size()), obs_variance),
                                     std::move(locations));
}

void ExperimentConfig::validate() const {
  if (model == ModelId::Lorenz63 && dim != 3) throw ConfigError("config: lorenz63 has dimension 3");
  if (model == ModelId::Lorenz96 && dim < 4) throw ConfigError("config: lorenz96 needs at least 4 variables");
  if (!(flow.dt > 0.0) || flow.steps_per_assimilation < 1 || !(flow.solver_tol > 0.0) || flow.solver_max_iters < 1)
    throw ConfigError("config: integrator settings must be positive");
  if (obs_indices.empty()) throw ConfigError("config: no observed components");
  for (Index j : obs_indices)
    if (j < 0 || j >= dim) throw ConfigError("config: observation index out of range");
  if (!(obs_variance > 0.0)) throw ConfigError("config: observation variance must be positive");
  if (ensemble_size < 1) throw ConfigError("config: ensemble size must be positive");
  if (ensemble_size < 2 && filter != FilterId::Perfect && filter != FilterId::ObsOnly)
    throw ConfigError("config: this filter needs at least two members");
  if (!(inflation >= 1.0)) throw ConfigError("config: inflation must be at least 1");
  if (!(rejuvenation >= 0.0)) throw ConfigError("config: rejuvenation must be nonnegative");
  if (!(epsilon >= 0.0)) throw ConfigError("config: epsilon must be nonnegative");
  if (!(localization.r_loc_R >= 0.0) || !(localization.r_loc_c >= 0.0))
    throw ConfigError("config: localization radii must be nonnegative");
  if (!(domain_length > 0.0)) throw ConfigError("config: domain length must be positive");
  if (cycles < 1 || discard < 0 || discard >= cycles || spinup < 0)
    throw ConfigError("config: need cycles > discard >= 0 and spinup >= 0");
  if (!(init_spread >= 0.0) || !(reference_perturbation >= 0.0))
    throw ConfigError("config: perturbation sizes must be nonnegative");
  if (!(divergence_threshold > 0.0) || divergence_window < 1) throw ConfigError("config: invalid divergence settings");
}

std::string ExperimentConfig::echo() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "[model]\nname = " << to_string(model) << "\ndim = " << dim;
  if (model == ModelId::Lorenz63)
    os << "\nsigma = " << l63.sigma << "\nrho = " << l63.rho << "\nbeta = " << l63.beta;
  else
    os << "\nforcing = " << l96.forcing << "\ndx = " << l96.dx;
  os << "\n[integrator]\ndt = " << flow.dt << "\ntol = " << flow.solver_tol << "\nmax_iters = " << flow.solver_max_iters;
  os << "\n[observation]\nindices = " << join(obs_indices) << "\nvariance = " << obs_variance
     << "\ninterval = " << flow.steps_per_assimilation;
  os << "\n[filter]\nname = " << to_string(filter) << "\nensemble_size = " << ensemble_size
     << "\ninflation = " << inflation << "\nrejuvenation = " << rejuvenation << "\nepsilon = " << epsilon
     << "\nperturbed_obs = " << (enkf_perturbed_obs ? "true" : "false");
  os << "\n[localization]\nkernel = "
     << (localization.kernel == KernelType::GaspariCohn ? "gaspari_cohn" : "triangular")
     << "\nr_loc_R = " << localization.r_loc_R << "\nr_loc_c = " << localization.r_loc_c
     << "\nunits = " << (localization.units == RadiusUnits::GridIndex ? "grid" : "physical")
     << "\nlength = " << domain_length;
  os << "\n[run]\ncycles = " << cycles << "\ndiscard = " << discard << "\nspinup = " << spinup
     << "\nseed = " << seed << "\ninit_spread = " << init_spread
     << "\nreference_perturbation = " << reference_perturbation
     << "\ndivergence_threshold = " << divergence_threshold << "\ndivergence_window = " << divergence_window
     << "\ncomponent_normalized_rmse = " << (component_normalized_rmse ? "true" : "false")
     << "\ntiming = " << (record_timing ? "true" : "false") << "\n";
  return os.str();
}

ExperimentConfig lorenz63_defaults() {
  ExperimentConfig c;
  c.model = ModelId::Lorenz63;
  c.dim = 3;
  c.flow = {0.01, 12, 1e-12, 100};
  c.obs_indices = {0};
  c.obs_variance = 8.0;
  c.domain_length = 3.0;
  c.cycles = 5200;
  c.discard = 200;
  c.divergence_threshold = 40.0;
  return c;
}

ExperimentConfig lorenz96_defaults() {
  ExperimentConfig c;
  c.model = ModelId::Lorenz96;
  c.dim = 40;
  c.flow = {0.005, 22, 1e-12, 100};
  c.obs_indices = parse_indices("odd", c.dim);
  c.obs_variance = 8.0;
  c.domain_length = 40.0 * c.l96.dx;
  c.filter = FilterId::Letkf;
  c.ensemble_size = 20;
  c.cycles = 2500;
  c.discard = 500;
  c.component_normalized_rmse = true;
  c.divergence_threshold = 10.0;
  return c;
}

void set_parameter(ExperimentConfig& cfg, const std::string& name, double value) {
  if (name == "inflation") cfg.inflation = value;
  else if (name == "rejuvenation") cfg.rejuvenation = value;
  else if (name == "epsilon") cfg.epsilon = value;
  else if (name == "ensemble_size") cfg.ensemble_size = static_cast<Index>(std::llround(value));
  else if (name == "r_loc_R") cfg.localization.r_loc_R = value;
  else if (name == "r_loc_c") cfg.localization.r_loc_c = value;
  else if (name == "cycles") cfg.cycles = static_cast<Index>(std::llround(value));
  else if (name == "none") return;
  else throw ConfigError("config: unknown sweep parameter '" + name + "'");
}

std::vector<double> parse_value_list(const std::string& text) {
  const std::string t = trim(text);
  std::vector<double> out;
  if (t.empty()) return out;
  if (t.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(t);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError("config: ranges are written start:stop:step");
    const double a = parse_double("range", parts[0]);
    const double b = parse_double("range", parts[1]);
    const double step = parse_double("range", parts[2]);
    if (!(step > 0.0) || b < a) throw ConfigError("config: range needs step > 0 and stop >= start");
    const auto n = static_cast<Index>(std::floor((b - a) / step + 1e-9));
    for (Index k = 0; k <= n; ++k) out.push_back(a + static_cast<double>(k) * step);
    return out;
  }
  std::stringstream ss(t);
  for (std::string p; std::getline(ss, p, ',');)
    if (!trim(p).empty()) out.push_back(parse_double("list", p));
  return out;
}

FileConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto known = kKnownKeys.find(section);
    if (known == kKnownKeys.end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& kv : body)
      if (!known->second.count(kv.first)) throw ConfigError("config: unknown key " + section + "." + kv.first);
  }
  const auto get = [&tree](const std::string& path) { return tree.get_optional<std::string>(path); };

  FileConfig fc;
  ExperimentConfig& c = fc.experiment;
  if (auto v = get("model.name")) {
    const std::string name = lower(trim(*v));
    if (name == "lorenz63") c = lorenz63_defaults();
    else if (name == "lorenz96") c = lorenz96_defaults();
    else throw ConfigError("config: unknown model '" + *v + "'");
  } else {
    c = lorenz63_defaults();
  }
  if (auto v = get("model.dim")) {
    c.dim = parse_index("model.dim", *v);
    if (c.model == ModelId::Lorenz96 && !get("localization.length")) c.domain_length = static_cast<double>(c.dim) * c.l96.dx;
    if (c.model == ModelId::Lorenz96 && !get("observation.indices")) c.obs_indices = parse_indices("odd", c.dim);
  }
  if (auto v = get("model.sigma")) c.l63.sigma = parse_double("model.sigma", *v);
  if (auto v = get("model.rho")) c.l63.rho = parse_double("model.rho", *v);
  if (auto v = get("model.beta")) c.l63.beta = parse_double("model.beta", *v);
  if (auto v = get("model.forcing")) c.l96.forcing = parse_double("model.forcing", *v);
  if (auto v = get("model.dx")) {
    c.l96.dx = parse_double("model.dx", *v);
    if (c.model == ModelId::Lorenz96 && !get("localization.length")) c.domain_length = static_cast<double>(c.dim) * c.l96.dx;
  }

  if (auto v = get("integrator.dt")) c.flow.dt = parse_double("integrator.dt", *v);
  if (auto v = get("integrator.tol")) c.flow.solver_tol = parse_double("integrator.tol", *v);
  if (auto v = get("integrator.max_iters")) c.flow.solver_max_iters = static_cast<int>(parse_index("integrator.max_iters", *v));

  if (auto v = get("observation.indices")) c.obs_indices = parse_indices(*v, c.dim);
  if (auto v = get("observation.variance")) c.obs_variance = parse_double("observation.variance", *v);
  if (auto v = get("observation.interval"))
    c.flow.steps_per_assimilation = static_cast<int>(parse_index("observation.interval", *v));

  if (auto v = get("filter.name")) c.filter = parse_filter_id(*v);
  if (auto v = get("filter.ensemble_size")) c.ensemble_size = parse_index("filter.ensemble_size", *v);
  if (auto v = get("filter.inflation")) c.inflation = parse_double("filter.inflation", *v);
  if (auto v = get("filter.rejuvenation")) c.rejuvenation = parse_double("filter.rejuvenation", *v);
  if (auto v = get("filter.epsilon")) c.epsilon = parse_double("filter.epsilon", *v);
  if (auto v = get("filter.perturbed_obs")) c.enkf_perturbed_obs = parse_bool("filter.perturbed_obs", *v);

  if (auto v = get("localization.kernel")) {
    const std::string k = lower(trim(*v));
    if (k == "gaspari_cohn") c.localization.kernel = KernelType::GaspariCohn;
    else if (k == "triangular") c.localization.kernel = KernelType::Triangular;
    else throw ConfigError("config: unknown kernel '" + *v + "'");
  }
  if (auto v = get("localization.r_loc_R")) c.localization.r_loc_R = parse_double("localization.r_loc_R", *v);
  if (auto v = get("localization.r_loc_c")) c.localization.r_loc_c = parse_double("localization.r_loc_c", *v);
  if (auto v = get("localization.units")) {
    const std::string u = lower(trim(*v));
    if (u == "grid") c.localization.units = RadiusUnits::GridIndex;
    else if (u == "physical") c.localization.units = RadiusUnits::Physical;
    else throw ConfigError("config: units must be grid or physical");
  }
  if (auto v = get("localization.length")) c.domain_length = parse_double("localization.length", *v);

  if (auto v = get("run.cycles")) c.cycles = parse_index("run.cycles", *v);
  if (auto v = get("run.discard")) c.discard = parse_index("run.discard", *v);
  if (auto v = get("run.spinup")) c.spinup = parse_index("run.spinup", *v);
  if (auto v = get("run.seed")) c.seed = static_cast<std::uint64_t>(parse_index("run.seed", *v));
  if (auto v = get("run.init_spread")) c.init_spread = parse_double("run.init_spread", *v);
  if (auto v = get("run.reference_perturbation"))
    c.reference_perturbation = parse_double("run.reference_perturbation", *v);
  if (auto v = get("run.divergence_threshold"))
    c.divergence_threshold = parse_double("run.divergence_threshold", *v);
  if (auto v = get("run.divergence_window")) c.divergence_window = parse_index("run.divergence_window", *v);
  if (auto v = get("run.component_normalized_rmse"))
    c.component_normalized_rmse = parse_bool("run.component_normalized_rmse", *v);
  if (auto v = get("run.timing")) c.record_timing = parse_bool("run.timing", *v);
  c.validate();

  if (auto v = get("sweep.param1")) fc.sweep.param1 = trim(*v);
  if (auto v = get("sweep.values1")) fc.sweep.values1 = parse_value_list(*v);
  if (auto v = get("sweep.param2")) fc.sweep.param2 = trim(*v);
  if (auto v = get("sweep.values2")) fc.sweep.values2 = parse_value_list(*v);
  if (fc.sweep.values1.empty() || fc.sweep.values2.empty()) throw ConfigError("config: empty sweep grid");

  fc.qmc.seed = c.seed;
  if (auto v = get("qmc.sizes")) {
    fc.qmc.sizes.clear();
    for (double s : parse_value_list(*v)) fc.qmc.sizes.push_back(static_cast<Index>(s));
  }
  if (auto v = get("qmc.reference_size")) fc.qmc.reference_size = parse_index("qmc.reference_size", *v);
  if (auto v = get("qmc.obs_variance")) fc.qmc.obs_variance = parse_double("qmc.obs_variance", *v);
  if (auto v = get("qmc.shifts")) fc.qmc.shifts = parse_index("qmc.shifts", *v);
  if (auto v = get("qmc.repeats")) fc.qmc.repeats = parse_index("qmc.repeats", *v);
  if (auto v = get("qmc.stochastic_etpf")) fc.qmc.stochastic_etpf = parse_bool("qmc.stochastic_etpf", *v);

  SmootherConfig& s = fc.smoother;
  if (auto v = get("smoother.a")) s.a = parse_double("smoother.a", *v);
  if (auto v = get("smoother.m0")) s.m0 = parse_double("smoother.m0", *v);
  if (auto v = get("smoother.p0")) s.p0 = parse_double("smoother.p0", *v);
  if (auto v = get("smoother.r")) s.r = parse_double("smoother.r", *v);
  if (auto v = get("smoother.steps")) s.steps = parse_index("smoother.steps", *v);
  if (auto v = get("smoother.samples")) s.samples = parse_index("smoother.samples", *v);
  if (auto v = get("smoother.mcmc_samples")) s.mcmc_samples = parse_index("smoother.mcmc_samples", *v);
  if (auto v = get("smoother.burn_in")) s.burn_in = parse_index("smoother.burn_in", *v);
  if (auto v = get("smoother.proposal_std")) s.proposal_std = parse_double("smoother.proposal_std", *v);
  return fc;
}

FileConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace letf
