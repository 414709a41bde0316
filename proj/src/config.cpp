#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "aggfolio/error.hpp"
#include "aggfolio/experiment.hpp"
#include "aggfolio/random.hpp"

namespace aggfolio {

namespace {

using nlohmann::json;

const char* type_name(const json& j) { return j.type_name(); }

// Strict view of one JSON object: every key must be consumed before
// finish(), anything left over is an unknown key.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j.is_object(), ErrorKind::Config, where_ + ": expected an object, got " + type_name(j));
  }

  const json* optional(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& required(const std::string& key) {
    const json* v = optional(key);
    require(v != nullptr, ErrorKind::Config, where_ + ": missing required key '" + key + "'");
    return *v;
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const json* v = fallback ? optional(key) : &required(key);
    if (v == nullptr) return *fallback;
    require(v->is_number(), ErrorKind::Config, path(key) + ": expected a number, got " + type_name(*v));
    return v->get<double>();
  }

  long long integer(const std::string& key, std::optional<long long> fallback = std::nullopt) {
    const json* v = fallback ? optional(key) : &required(key);
    if (v == nullptr) return *fallback;
    require(v->is_number_integer(), ErrorKind::Config, path(key) + ": expected an integer, got " + type_name(*v));
    return v->get<long long>();
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    const json* v = optional(key);
    if (v == nullptr) return fallback;
    require(v->is_number_unsigned(), ErrorKind::Config, path(key) + ": expected a nonnegative integer seed");
    return v->get<std::uint64_t>();
  }

  std::string text(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    const json* v = fallback ? optional(key) : &required(key);
    if (v == nullptr) return *fallback;
    require(v->is_string(), ErrorKind::Config, path(key) + ": expected a string, got " + type_name(*v));
    return v->get<std::string>();
  }

  void finish() const {
    std::string unknown;
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) unknown += (unknown.empty() ? "'" : ", '") + key + "'";
    require(unknown.empty(), ErrorKind::Config, where_ + ": unknown key(s) " + unknown);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

Month month_field(Fields& f, const std::string& key, std::optional<Month> fallback = std::nullopt) {
  const json* v = fallback ? f.optional(key) : &f.required(key);
  if (v == nullptr) return *fallback;
  require(v->is_string(), ErrorKind::Config, f.path(key) + ": expected a \"YYYY-MM\" string");
  try {
    return Month::parse(v->get<std::string>());
  } catch (const Error& e) {
    fail(ErrorKind::Config, f.path(key) + ": " + e.what());
  }
}

SyntheticPanelSpec parse_synthetic(const json& j, std::uint64_t master) {
  Fields f(j, "data.synthetic");
  SyntheticPanelSpec s;
  s.assets = f.integer("assets", s.assets);
  s.months = static_cast<int>(f.integer("months", s.months));
  s.start = month_field(f, "start", s.start);
  s.features = static_cast<int>(f.integer("features", s.features));
  s.missing_rate = f.number("missing_rate", s.missing_rate);
  s.signal = f.number("signal", s.signal);
  s.market_vol = f.number("market_vol", s.market_vol);
  s.idiosyncratic_vol = f.number("idiosyncratic_vol", s.idiosyncratic_vol);
  s.persistence = f.number("persistence", s.persistence);
  s.seed = f.seed("seed", derive_seed(master, "panel"));
  f.finish();
  require(s.assets > 0 && s.months > 0 && s.features >= 1, ErrorKind::Config,
          "data.synthetic: assets, months and features must be positive");
  require(s.missing_rate >= 0 && s.missing_rate < 1, ErrorKind::Config,
          "data.synthetic.missing_rate must lie in [0, 1)");
  require(s.persistence >= 0 && s.persistence < 1, ErrorKind::Config,
          "data.synthetic.persistence must lie in [0, 1)");
  require(s.market_vol >= 0 && s.idiosyncratic_vol >= 0, ErrorKind::Config,
          "data.synthetic volatilities must be nonnegative");
  return s;
}

DataSource parse_data(const json& j, const std::filesystem::path& base, std::uint64_t master) {
  Fields f(j, "data");
  DataSource d;
  const json* synthetic = f.optional("synthetic");
  const json* panel = f.optional("panel");
  const json* schema = f.optional("schema");
  f.finish();
  require((synthetic != nullptr) != (panel != nullptr), ErrorKind::Config,
          "data: give either 'panel' (with 'schema') or 'synthetic'");
  if (synthetic != nullptr) {
    require(schema == nullptr, ErrorKind::Config, "data.schema only applies to a panel file");
    d.synthetic = parse_synthetic(*synthetic, master);
  } else {
    require(schema != nullptr, ErrorKind::Config, "data: 'panel' needs a 'schema' sidecar");
    require(panel->is_string() && schema->is_string(), ErrorKind::Config, "data.panel and data.schema are paths");
    d.files = {resolve(base, panel->get<std::string>()), resolve(base, schema->get<std::string>())};
  }
  return d;
}

ExpertSpec parse_expert(const json& j, std::size_t index, const std::filesystem::path& base, std::uint64_t master) {
  Fields f(j, "experts[" + std::to_string(index) + "]");
  ExpertSpec spec;
  spec.name = f.text("name");
  require(!spec.name.empty() && spec.name.find_first_of(",\n\r\"") == std::string::npos, ErrorKind::Config,
          f.path("name") + ": names must be nonempty and free of commas, quotes and newlines");
  const std::uint64_t own_seed = derive_seed(master, "expert:" + spec.name);
  const std::string kind = f.text("kind");
  if (kind == "linear_huber") {
    LinearHuberSpec s;
    s.xi = f.number("xi", s.xi);
    s.learning_rate = f.number("learning_rate", s.learning_rate);
    s.epochs = static_cast<int>(f.integer("epochs", s.epochs));
    s.l1_penalty = f.number("l1_penalty", s.l1_penalty);
    s.subsample_fraction = f.number("subsample_fraction", s.subsample_fraction);
    s.seed = f.seed("seed", own_seed);
    require(s.xi > 0 && s.learning_rate > 0 && s.epochs >= 0 && s.l1_penalty >= 0, ErrorKind::Config,
            f.path("kind") + ": linear_huber needs xi > 0, learning_rate > 0, epochs >= 0, l1_penalty >= 0");
    require(s.subsample_fraction > 0 && s.subsample_fraction <= 1, ErrorKind::Config,
            f.path("subsample_fraction") + " must lie in (0, 1]");
    spec.kind = s;
  } else if (kind == "noisy_oracle") {
    NoisyOracleSpec s;
    s.noise.initial = f.number("sigma");
    if (const json* changes = f.optional("changes")) {
      require(changes->is_array(), ErrorKind::Config, f.path("changes") + ": expected an array");
      for (std::size_t c = 0; c < changes->size(); ++c) {
        Fields g((*changes)[c], f.path("changes") + "[" + std::to_string(c) + "]");
        const Month from = month_field(g, "from");
        const double sigma = g.number("sigma");
        g.finish();
        require(s.noise.changes.empty() || s.noise.changes.back().first < from, ErrorKind::Config,
                f.path("changes") + ": change points must increase");
        s.noise.changes.emplace_back(from, sigma);
      }
    }
    s.seed = f.seed("seed", own_seed);
    require(s.noise.initial >= 0, ErrorKind::Config, f.path("sigma") + " must be nonnegative");
    for (const auto& c : s.noise.changes)
      require(c.second >= 0, ErrorKind::Config, f.path("changes") + ": sigma must be nonnegative");
    spec.kind = s;
  } else if (kind == "constant") {
    spec.kind = ConstantSpec{f.number("value")};
  } else if (kind == "external") {
    spec.kind = ExternalSpec{resolve(base, f.text("path"))};
  } else {
    fail(ErrorKind::Config,
         f.path("kind") + ": unknown expert kind '" + kind + "' (linear_huber, noisy_oracle, constant, external)");
  }
  f.finish();
  return spec;
}

Rule parse_rule(const json& j) {
  Fields f(j, "rule");
  const std::string kind = f.text("kind");
  Rule rule;
  if (kind == "uniform") {
    rule = Rule::uniform();
  } else if (kind == "boa_adaptive") {
    rule = Rule::boa_adaptive();
  } else if (kind == "boa_fixed") {
    const double eta = f.number("eta");
    require(eta > 0 && std::isfinite(eta), ErrorKind::Config, "rule.eta must be positive");
    rule = Rule::boa_fixed(eta);
  } else {
    fail(ErrorKind::Config, "rule.kind: unknown rule '" + kind + "' (uniform, boa_fixed, boa_adaptive)");
  }
  f.finish();
  return rule;
}

LossKind parse_loss(const json& j) {
  Fields f(j, "loss");
  const std::string kind = f.text("kind");
  LossKind loss = LossKind::squared();
  if (kind == "huber") {
    const double threshold = f.number("threshold");
    require(threshold > 0, ErrorKind::Config, "loss.threshold must be positive");
    loss = LossKind::huber(threshold);
  } else {
    require(kind == "squared", ErrorKind::Config, "loss.kind: unknown loss '" + kind + "' (squared, huber)");
  }
  f.finish();
  return loss;
}

UniverseSelector parse_universe(const json& j) {
  Fields f(j, "universe");
  const std::string kind = f.text("kind");
  UniverseSelector u;
  if (kind == "top" || kind == "bottom") {
    const long long n = f.integer("count");
    require(n >= kMinUniverse, ErrorKind::Config,
            "universe.count must be at least " + std::to_string(kMinUniverse));
    u = kind == "top" ? UniverseSelector::top(n) : UniverseSelector::bottom(n);
  } else {
    require(kind == "all", ErrorKind::Config, "universe.kind: unknown selector '" + kind + "' (all, top, bottom)");
  }
  f.finish();
  return u;
}

VerifyConfig parse_verify(const json* j, std::uint64_t master) {
  VerifyConfig v;
  v.seed = derive_seed(master, "verify");
  if (j == nullptr) return v;
  Fields f(*j, "verify");
  const std::string scenario = f.text("scenario", "constant_experts");
  if (scenario == "constant_experts") {
    v.scenario = VerifyConfig::Scenario::ConstantExperts;
  } else if (scenario == "regime_switch") {
    v.scenario = VerifyConfig::Scenario::RegimeSwitch;
  } else if (scenario == "identical_experts") {
    v.scenario = VerifyConfig::Scenario::IdenticalExperts;
  } else if (scenario == "iid_losses") {
    v.scenario = VerifyConfig::Scenario::IidLosses;
  } else {
    fail(ErrorKind::Config, "verify.scenario: unknown scenario '" + scenario +
                                "' (constant_experts, regime_switch, identical_experts, iid_losses)");
  }
  v.steps = f.integer("steps", v.steps);
  v.experts = f.integer("experts", v.experts);
  if (f.optional("grid_step") != nullptr) v.grid_step = f.number("grid_step");
  v.seed = f.seed("seed", v.seed);
  f.finish();
  require(v.steps >= 2, ErrorKind::Config, "verify.steps must be at least 2");
  require(v.experts >= 1, ErrorKind::Config, "verify.experts must be positive");
  return v;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
  Fields f(doc, "config");
  ExperimentConfig c;
  const long long version = f.integer("schema_version");
  require(version == kConfigSchemaVersion, ErrorKind::Config,
          "config.schema_version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kConfigSchemaVersion) + ")");
  c.seed = f.seed("seed", 0);
  if (const json* d = f.optional("data")) c.data = parse_data(*d, base_dir, c.seed);

  if (const json* experts = f.optional("experts")) {
    require(experts->is_array(), ErrorKind::Config, "config.experts: expected an array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < experts->size(); ++i) {
      c.experts.push_back(parse_expert((*experts)[i], i, base_dir, c.seed));
      require(names.insert(c.experts.back().name).second, ErrorKind::Config,
              "config.experts: duplicate expert name '" + c.experts.back().name + "'");
    }
  }

  if (const json* b = f.optional("bagging")) {
    Fields g(*b, "bagging");
    BaggingConfig bag;
    const json& base = g.required("base");
    require(base.is_array() && !base.empty(), ErrorKind::Config, "bagging.base: expected a nonempty array of names");
    for (const auto& name : base) {
      require(name.is_string(), ErrorKind::Config, "bagging.base: expected expert names");
      bag.base.push_back(name.get<std::string>());
    }
    bag.count = static_cast<int>(g.integer("count", bag.count));
    bag.fraction = g.number("fraction", bag.fraction);
    bag.seed = g.seed("seed", derive_seed(c.seed, "bagging"));
    g.finish();
    require(bag.count >= 1, ErrorKind::Config, "bagging.count must be at least 1");
    require(bag.fraction > 0 && bag.fraction <= 1, ErrorKind::Config, "bagging.fraction must lie in (0, 1]");
    for (const auto& name : bag.base) {
      const auto it = std::find_if(c.experts.begin(), c.experts.end(), [&](const auto& e) { return e.name == name; });
      require(it != c.experts.end(), ErrorKind::Config, "bagging.base: unknown expert '" + name + "'");
      require(it->trainable(), ErrorKind::Config, "bagging.base: expert '" + name + "' is not trainable");
    }
    c.bagging = bag;
  }

  if (const json* s = f.optional("schedule")) {
    Fields g(*s, "schedule");
    ScheduleConfig sc;
    sc.start_year = static_cast<int>(g.integer("start_year"));
    sc.train_years = static_cast<int>(g.integer("train_years"));
    sc.validation_years = static_cast<int>(g.integer("validation_years"));
    sc.final_test_year = static_cast<int>(g.integer("final_test_year"));
    g.finish();
    try {
      build_schedule(sc.start_year, sc.train_years, sc.validation_years, sc.final_test_year);
    } catch (const Error& e) {
      fail(ErrorKind::Config, std::string("schedule: ") + e.what());
    }
    c.schedule = sc;
  }

  const std::string weighting = f.text("weighting", "equal");
  require(weighting == "equal" || weighting == "value", ErrorKind::Config,
          "config.weighting: expected 'equal' or 'value', got '" + weighting + "'");
  c.weighting = weighting == "equal" ? Weighting::Equal : Weighting::Value;
  if (const json* u = f.optional("universe")) c.universe = parse_universe(*u);
  if (const json* r = f.optional("rule")) c.rule = parse_rule(*r);
  if (const json* l = f.optional("loss")) c.loss = parse_loss(*l);
  c.pretrain_months = static_cast<int>(f.integer("pretrain_months", 0));
  require(c.pretrain_months >= 0, ErrorKind::Config, "config.pretrain_months must be nonnegative");
  if (c.schedule)
    require(c.pretrain_months <= 12 * c.schedule->validation_years, ErrorKind::Config,
            "config.pretrain_months must fit inside the first validation span (" +
                std::to_string(12 * c.schedule->validation_years) + " months)");

  const json* out = f.optional("output_dir");
  if (out != nullptr) {
    require(out->is_string(), ErrorKind::Config, "config.output_dir: expected a path");
    c.output_dir = resolve(base_dir, out->get<std::string>());
  } else if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') {
    c.output_dir = env;
  } else {
    c.output_dir = "aggfolio-out";
  }
  const long long threads = f.integer("threads", 0);
  require(threads >= 0, ErrorKind::Config, "config.threads must be nonnegative");
  c.threads = static_cast<unsigned>(threads);
  c.verify = parse_verify(f.optional("verify"), c.seed);
  f.finish();

  c.canonical_json = doc.dump();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Config, "cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

std::vector<ExpertSpec> expand_experts(const ExperimentConfig& config) {
  std::vector<ExpertSpec> out;
  for (const auto& spec : config.experts) {
    out.push_back(spec);
    if (!config.bagging) continue;
    const auto& bag = *config.bagging;
    if (std::find(bag.base.begin(), bag.base.end(), spec.name) == bag.base.end()) continue;
    for (auto& replica : bag_experts(spec, bag.count, bag.fraction, derive_seed(bag.seed, spec.name)))
      out.push_back(std::move(replica));
  }
  std::set<std::string> names;
  for (const auto& e : out)
    require(names.insert(e.name).second, ErrorKind::Config,
            "expert name '" + e.name + "' collides with a bagged replica");
  return out;
}

}  // namespace aggfolio
