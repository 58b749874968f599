#pragma once

// Flat `key = value` configuration with dotted sections, typed validation,
// environment overrides and a reproducibility manifest.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmsfem/coeff.hpp"
#include "bmsfem/error.hpp"
#include "bmsfem/march.hpp"
#include "bmsfem/mesh.hpp"

namespace bmsfem {

enum class KeyType { integer, real, text, grid, seed, choice };

struct KeySpec {
  std::string name;
  KeyType type;
  std::string fallback;  // empty with `required` means no default
  bool required = false;
  std::vector<std::string> choices{};
  std::string help{};
};

inline const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      {"formulation", KeyType::choice, "", true, {"cg", "mixed", "ipdg"}, "fine discretization"},
      {"grid.fine", KeyType::grid, "", true, {}, "fine cells, NXxNY"},
      {"grid.coarse", KeyType::grid, "", true, {}, "coarse blocks, NXxNY"},
      {"grid.lx", KeyType::real, "1", false, {}, "domain width"},
      {"grid.ly", KeyType::real, "1", false, {}, "domain height"},
      {"field.path", KeyType::text, "", false, {}, "coefficient file; generated when empty"},
      {"field.background", KeyType::real, "1", false, {}, "generator background value"},
      {"field.contrast", KeyType::real, "1000", false, {}, "generator channel/background ratio"},
      {"field.seed", KeyType::seed, "7", false, {}, "generator seed"},
      {"field.num_channels", KeyType::integer, "4", false, {}, "generator stripe count"},
      {"field.law", KeyType::choice, "constant", false, {"constant", "contrast"}, "time law"},
      {"field.c0", KeyType::real, "1000", false, {}, "contrast at t = 0"},
      {"field.rate", KeyType::real, "250", false, {}, "contrast growth rate"},
      {"time.dt", KeyType::real, "0.01", false, {}, "interval length (parabolic) or fine step (wave)"},
      {"time.intervals", KeyType::integer, "2", false, {}, "number of coarse time intervals"},
      {"time.substeps", KeyType::integer, "1", false, {}, "implicit steps per parabolic interval"},
      {"time.steps_per_interval", KeyType::integer, "10", false, {}, "wave steps per interval"},
      {"time.source", KeyType::real, "1", false, {}, "constant source"},
      {"time.initial", KeyType::choice, "zero", false, {"zero", "sine"}, "initial condition"},
      {"basis.n_perm", KeyType::integer, "2", false, {}, "permanent functions per region"},
      {"basis.n_candidates", KeyType::integer, "6", false, {}, "candidate functions per region"},
      {"basis.buffer", KeyType::text, "4", false, {}, "extra snapshots per region, or all"},
      {"basis.layers", KeyType::integer, "1", false, {}, "oversampling layers"},
      {"basis.gamma", KeyType::real, "10", false, {}, "interior penalty"},
      {"basis.cache", KeyType::text, "", false, {}, "basis cache to load"},
      {"bayes.sigma_L", KeyType::real, "1e-3", false, {}, "likelihood precision"},
      {"bayes.n_omega", KeyType::real, "1", false, {}, "expected selected regions (probabilistic mode)"},
      {"bayes.n_basis", KeyType::real, "2", false, {}, "expected candidates per region"},
      {"bayes.posterior", KeyType::choice, "auto", false, {"auto", "fixed", "previous"},
       "auto: previous for ipdg, fixed otherwise"},
      {"sampler.method", KeyType::choice, "gibbs", false, {"sequential", "gibbs"}, "sampler"},
      {"sampler.samples", KeyType::integer, "20", false, {}, "sequential realizations"},
      {"sampler.sweeps", KeyType::integer, "30", false, {}, "Gibbs sweeps"},
      {"sampler.burn_in", KeyType::real, "0.25", false, {}, "fraction of sweeps discarded"},
      {"sampler.region_mode", KeyType::choice, "top_fraction", false, {"top_fraction", "probabilistic"},
       "region selection"},
      {"sampler.region_fraction", KeyType::real, "0.3", false, {}, "share of regions selected"},
      {"sampler.seed", KeyType::seed, "1", false, {}, "master seed"},
      {"sampler.threads", KeyType::integer, "1", false, {}, "worker cap"},
      {"output.dir", KeyType::text, "out", false, {}, "output root"},
  };
  return keys;
}

inline const KeySpec* find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

inline std::string env_name(const std::string& key) {
  std::string out = "BMSFEM_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string where(int line) { return line > 0 ? "line " + std::to_string(line) + ": " : ""; }

}  // namespace detail

inline std::optional<std::pair<int, int>> parse_grid(const std::string& v) {
  auto x = v.find_first_of("xX");
  if (x == std::string::npos) return std::nullopt;
  int a = 0, b = 0;
  auto s1 = v.substr(0, x), s2 = v.substr(x + 1);
  auto r1 = std::from_chars(s1.data(), s1.data() + s1.size(), a);
  auto r2 = std::from_chars(s2.data(), s2.data() + s2.size(), b);
  if (r1.ec != std::errc{} || r1.ptr != s1.data() + s1.size() || r2.ec != std::errc{} ||
      r2.ptr != s2.data() + s2.size() || a < 1 || b < 1)
    return std::nullopt;
  return std::make_pair(a, b);
}

inline void validate_value(const KeySpec& k, const std::string& v, int line) {
  auto fail = [&](const std::string& what) {
    throw ConfigError(detail::where(line) + "key '" + k.name + "': " + what + " (got '" + v + "')");
  };
  switch (k.type) {
    case KeyType::integer: {
      int x = 0;
      auto r = std::from_chars(v.data(), v.data() + v.size(), x);
      if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) fail("expected an integer");
      break;
    }
    case KeyType::seed: {
      std::uint64_t x = 0;
      auto r = std::from_chars(v.data(), v.data() + v.size(), x);
      if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) fail("expected a non-negative integer");
      break;
    }
    case KeyType::real: {
      char* end = nullptr;
      std::strtod(v.c_str(), &end);
      if (v.empty() || end != v.c_str() + v.size()) fail("expected a number");
      break;
    }
    case KeyType::grid:
      if (!parse_grid(v)) fail("expected NXxNY");
      break;
    case KeyType::choice:
      if (std::find(k.choices.begin(), k.choices.end(), v) == k.choices.end()) {
        std::string opts;
        for (const auto& c : k.choices) opts += (opts.empty() ? "" : "|") + c;
        fail("expected one of " + opts);
      }
      break;
    case KeyType::text: break;
  }
}

/// Resolved configuration: every known key with its value and origin.
class Config {
 public:
  /// Parses text, then applies environment overrides. `origin` names the source in errors.
  static Config parse(std::istream& in, bool use_env = true) {
    Config c;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      auto hash = raw.find('#');
      std::string s = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (s.empty()) continue;
      auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError(detail::where(line) + "expected 'key = value'");
      c.set(detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)), line, "file");
    }
    if (use_env) c.apply_env();
    return c;
  }

  static Config load(const std::string& path, bool use_env = true) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    return parse(in, use_env);
  }

  void set(const std::string& key, const std::string& value, int line = 0,
           const std::string& origin = "override") {
    const KeySpec* k = find_key(key);
    if (!k) throw ConfigError(detail::where(line) + "unknown key '" + key + "'");
    validate_value(*k, value, line);
    values_[key] = value;
    origin_[key] = origin;
  }

  /// KEY=VALUE assignment from the command line.
  void set_assignment(const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
    set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }

  void apply_env() {
    for (const auto& k : config_keys())
      if (const char* v = std::getenv(env_name(k.name).c_str())) set(k.name, v, 0, "env");
  }

  void require() const {
    for (const auto& k : config_keys())
      if (k.required && !values_.count(k.name)) throw ConfigError("missing required key '" + k.name + "'");
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key) const {
    const KeySpec* k = find_key(key);
    if (!k) throw ConfigError("unknown key '" + key + "'");
    auto it = values_.find(key);
    if (it != values_.end()) return it->second;
    if (k->required) throw ConfigError("missing required key '" + key + "'");
    return k->fallback;
  }
  int get_int(const std::string& key) const { return std::stoi(get(key)); }
  double get_real(const std::string& key) const { return std::strtod(get(key).c_str(), nullptr); }
  std::uint64_t get_seed(const std::string& key) const { return std::stoull(get(key)); }
  std::pair<int, int> get_grid(const std::string& key) const { return *parse_grid(get(key)); }

  /// All keys with resolved values, in table order.
  std::vector<std::pair<std::string, std::string>> resolved() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : config_keys()) {
      auto it = values_.find(k.name);
      out.emplace_back(k.name, it != values_.end() ? it->second : (k.required ? "" : k.fallback));
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origin_;
};

inline MeshHierarchy mesh_from_config(const Config& c) {
  auto [nxf, nyf] = c.get_grid("grid.fine");
  auto [nxc, nyc] = c.get_grid("grid.coarse");
  return build_hierarchy(nxf, nyf, nxc, nyc, c.get_real("grid.lx"), c.get_real("grid.ly"));
}

inline ChannelFieldSpec field_spec_from_config(const Config& c) {
  ChannelFieldSpec s;
  s.background = c.get_real("field.background");
  s.contrast = c.get_real("field.contrast");
  s.seed = c.get_seed("field.seed");
  s.num_channels = c.get_int("field.num_channels");
  return s;
}

inline CoefficientField field_from_config(const Config& c, const MeshHierarchy& mesh) {
  const std::string path = c.get("field.path");
  CoefficientField f = path.empty() ? generate_channel_field(mesh, field_spec_from_config(c))
                                    : load_field(path, mesh);
  if (c.get("field.law") == "contrast") f.law = ContrastLaw{c.get_real("field.c0"), c.get_real("field.rate")};
  return f;
}

inline Formulation parse_formulation(const std::string& s) {
  if (s == "cg") return Formulation::cg;
  if (s == "mixed") return Formulation::mixed;
  if (s == "ipdg") return Formulation::ipdg;
  throw ConfigError("unknown formulation '" + s + "'");
}

inline RunPlan plan_from_config(const Config& c) {
  RunPlan p;
  p.formulation = parse_formulation(c.get("formulation"));
  p.dt = c.get_real("time.dt");
  p.intervals = c.get_int("time.intervals");
  p.substeps = c.get_int("time.substeps");
  p.steps_per_interval = c.get_int("time.steps_per_interval");
  p.source = c.get_real("time.source");
  p.initial = c.get("time.initial");
  p.basis.n_perm = c.get_int("basis.n_perm");
  p.basis.n_candidates = c.get_int("basis.n_candidates");
  if (c.get("basis.buffer") == "all") {
    p.basis.buffer = kAllSnapshots;
  } else {
    try {
      std::size_t used = 0;
      p.basis.buffer = std::stoi(c.get("basis.buffer"), &used);
      if (used != c.get("basis.buffer").size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("basis.buffer must be a non-negative integer or all");
    }
    if (p.basis.buffer < 0) throw ConfigError("basis.buffer must be >= 0");
  }
  p.basis.layers = c.get_int("basis.layers");
  p.gamma = c.get_real("basis.gamma");
  p.posterior.sigma_L = c.get_real("bayes.sigma_L");
  p.n_omega = c.get_real("bayes.n_omega");
  p.n_basis = c.get_real("bayes.n_basis");
  const std::string post = c.get("bayes.posterior");
  const bool previous = post == "previous" || (post == "auto" && p.formulation == Formulation::ipdg);
  p.posterior.variant = previous ? PosteriorVariant::around_previous : PosteriorVariant::around_fixed;
  p.method = c.get("sampler.method") == "sequential" ? SamplerMethod::sequential : SamplerMethod::gibbs;
  p.sampler.n_samples = c.get_int("sampler.samples");
  p.sampler.n_sweeps = c.get_int("sampler.sweeps");
  p.sampler.threads = std::max(1, c.get_int("sampler.threads"));
  p.burn_in = c.get_real("sampler.burn_in");
  p.region_mode = c.get("sampler.region_mode") == "probabilistic" ? RegionMode::probabilistic
                                                                  : RegionMode::top_fraction;
  p.region_fraction = c.get_real("sampler.region_fraction");
  p.seed = c.get_seed("sampler.seed");
  if (p.basis.layers < 0) throw ConfigError("basis.layers must be >= 0");
  if (p.burn_in < 0.0 || p.burn_in >= 1.0) throw ConfigError("sampler.burn_in must be in [0, 1)");
  check_plan(p);
  return p;
}

/// Resolved keys, code version and derived seeds. No timestamps, so identical runs
/// produce identical manifests.
inline void write_manifest(std::ostream& out, const Config& c, const std::string& command) {
#ifdef BMSFEM_VERSION
  out << "version = " << BMSFEM_VERSION << '\n';
#endif
  out << "command = " << command << '\n';
  for (const auto& [k, v] : c.resolved()) out << k << " = " << v << '\n';
  const auto master = c.get_seed("sampler.seed");
  out << "seed.basis = " << derive_seed(master, "basis", 0) << '\n';
  const int n = c.get_int("time.intervals");
  for (int i = 0; i < n; ++i)
    out << "seed.interval." << i << " = " << derive_seed(master, "interval", static_cast<std::uint64_t>(i)) << '\n';
}

}  // namespace bmsfem
