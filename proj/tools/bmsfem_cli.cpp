#include <CLI11.hpp>

#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bmsfem/bmsfem.hpp"

namespace fs = std::filesystem;
using namespace bmsfem;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  bool quiet = false;
};

Config load_config(const Common& c) {
  Config cfg = c.config.empty() ? Config{} : Config::load(c.config);
  if (c.config.empty()) cfg.apply_env();
  for (const auto& s : c.sets) cfg.set_assignment(s);
  cfg.require();
  return cfg;
}

fs::path output_dir(const Config& cfg, const Common& c, const std::string& sub) {
  fs::path root = c.out.empty() ? fs::path(cfg.get("output.dir")) : fs::path(c.out);
  fs::path dir = root / sub;
  fs::create_directories(dir);
  return dir;
}

void manifest(const fs::path& dir, const Config& cfg, const std::string& command) {
  std::ofstream out(dir / "manifest.txt", std::ios::binary);
  write_manifest(out, cfg, command);
}

std::string bits(const std::vector<char>& a) {
  std::string s;
  for (char c : a) s += c ? '1' : '0';
  return s;
}

/// Field in grid form for output.
GridField grid_of(const MeshHierarchy& mesh, const Problem& p, const Vector& u) {
  switch (p.formulation) {
    case Formulation::cg: return nodal_grid(mesh, cg_to_nodes(p.cg, u, mesh.num_fine_nodes()));
    case Formulation::ipdg: return nodal_grid(mesh, dg_to_nodes(mesh, u));
    case Formulation::mixed: {
      Vector m = flux_magnitude(mesh, p.mixed, u);
      return {std::vector<double>(m.data(), m.data() + m.size()), mesh.nx_fine(), mesh.ny_fine()};
    }
  }
  return {};
}

void write_grid(const fs::path& path, const GridField& g) { write_grid_csv(path.string(), g.values, g.nx, g.ny); }

std::unique_ptr<BasisCatalog> cached_catalog(const Config& cfg, const MeshHierarchy& mesh) {
  const std::string path = cfg.get("basis.cache");
  if (path.empty()) return nullptr;
  auto cat = std::make_unique<BasisCatalog>(load_basis_cache(path));
  for (const auto& r : cat->regions)
    for (int b : r.region.blocks)
      if (b < 0 || b >= mesh.num_blocks()) throw LoadError("basis cache does not match the grid");
  return cat;
}

// ---------------------------------------------------------------------------

int cmd_generate(const Common& c, const std::string& target) {
  Config cfg = load_config(c);
  MeshHierarchy mesh = mesh_from_config(cfg);
  CoefficientField f = generate_channel_field(mesh, field_spec_from_config(cfg));
  fs::path dir = output_dir(cfg, c, "field");
  fs::path path = target.empty() ? dir / "field.txt" : fs::path(target);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  write_field(out, f);
  manifest(dir, cfg, "generate-field");
  spdlog::info("wrote {} (contrast {})", path.string(), f.contrast());
  return 0;
}

int cmd_reference(const Common& c) {
  Config cfg = load_config(c);
  MeshHierarchy mesh = mesh_from_config(cfg);
  RunPlan plan = plan_from_config(cfg);
  CoefficientField field = field_from_config(cfg, mesh);
  ProblemSource src(mesh, field, plan, nullptr, ProblemMode::fine_only);
  fs::path dir = output_dir(cfg, c, "reference");
  std::vector<MarchState> states;
  {
    MarchState s;
    const Problem& p0 = src.at(0);
    s = initial_state(mesh, p0, plan);
    states.push_back(s);
    for (int n = 0; n < plan.intervals; ++n) {
      s = reference_interval(src.at(n), plan, s);
      states.push_back(s);
    }
  }
  CsvWriter norms((dir / "reference.csv").string());
  norms.header({"interval", "t", "l2_norm"});
  for (int n = 0; n <= plan.intervals; ++n) {
    const Problem& p = src.at(std::max(0, n - 1));
    const Vector& u = states[static_cast<std::size_t>(n)].curr;
    norms.row(n, n * plan.interval_length(), std::sqrt(std::max(0.0, u.dot(p.error_mass * u))));
    write_grid(dir / ("reference_t" + std::to_string(n) + ".csv"), grid_of(mesh, p, u));
  }
  manifest(dir, cfg, "reference");
  return 0;
}

int cmd_basis(const Common& c) {
  Config cfg = load_config(c);
  MeshHierarchy mesh = mesh_from_config(cfg);
  RunPlan plan = plan_from_config(cfg);
  CoefficientField field = field_from_config(cfg, mesh);
  BasisCatalog cat = build_catalog(mesh, field, plan, plan.sampler.threads);
  fs::path dir = output_dir(cfg, c, "basis");
  save_basis_cache((dir / "basis.bin").string(), cat);
  CsvWriter eig((dir / "eigenvalues.csv").string());
  eig.header({"region", "index", "eigenvalue"});
  for (const auto& r : cat.regions)
    for (Eigen::Index k = 0; k < r.eigenvalues.size(); ++k) eig.row(r.id, static_cast<int>(k), r.eigenvalues[k]);
  CsvWriter counts((dir / "regions.csv").string());
  counts.header({"region", "blocks", "permanent", "candidates", "test"});
  for (const auto& r : cat.regions)
    counts.row(r.id, static_cast<int>(r.region.size()), r.num_permanent(), r.num_candidates(), r.num_test());
  manifest(dir, cfg, "basis");
  spdlog::info("{} regions, {} permanent, {} candidates", cat.regions.size(), cat.num_permanent(),
               cat.num_candidates());
  return 0;
}

int cmd_fixed(const Common& c) {
  Config cfg = load_config(c);
  MeshHierarchy mesh = mesh_from_config(cfg);
  RunPlan plan = plan_from_config(cfg);
  CoefficientField field = field_from_config(cfg, mesh);
  auto cached = cached_catalog(cfg, mesh);
  ProblemSource src(mesh, field, plan, cached.get());
  fs::path dir = output_dir(cfg, c, "fixed");
  auto ref = reference_trajectory(mesh, src, plan);
  auto fix = fixed_solution(mesh, src, plan);
  CsvWriter summary((dir / "summary.csv").string());
  summary.header({"interval", "t", "fixed_error", "residual_norm"});
  CsvWriter regions((dir / "region_norms.csv").string());
  regions.header({"interval", "region", "l2", "sup"});
  for (int n = 0; n < plan.intervals; ++n) {
    const Problem& p = src.at(n);
    MarchState start = fix[static_cast<std::size_t>(n)];
    if (p.formulation == Formulation::mixed) start.aux = fix[static_cast<std::size_t>(n) + 1].aux;
    IntervalModel m(p, plan, start);
    Evaluation ev = m.evaluate(std::vector<char>(static_cast<std::size_t>(p.catalog.num_candidates()), 0));
    RegionNorms norms = region_norms({ev.residual, p.catalog.test.offsets, n});
    const Vector& u = fix[static_cast<std::size_t>(n) + 1].curr;
    summary.row(n, (n + 1) * plan.interval_length(),
                relative_l2(u, ref[static_cast<std::size_t>(n) + 1].curr, p.error_mass), norms.global);
    for (int k = 0; k < p.catalog.num_regions(); ++k)
      regions.row(n, k, norms.local[static_cast<std::size_t>(k)], norms.local_sup[static_cast<std::size_t>(k)]);
    write_grid(dir / ("fixed_t" + std::to_string(n + 1) + ".csv"), grid_of(mesh, p, u));
  }
  manifest(dir, cfg, "fixed");
  return 0;
}

/// Writes every CSV of a sampling run into `dir`.
void write_run(const fs::path& dir, const MeshHierarchy& mesh, ProblemSource& src,
               const RunPlan& plan, const MarchResult& res) {
  CsvWriter summary((dir / "summary.csv").string());
  summary.header({"interval", "t", "fixed_error", "mean_error", "mean_residual", "records",
                  "coverage_1", "coverage_2", "coverage_3"});
  CsvWriter residual((dir / "residual.csv").string());
  residual.header({"interval", "record", "residual_norm"});
  CsvWriter error((dir / "error.csv").string());
  error.header({"interval", "record", "error"});
  CsvWriter counts((dir / "basis_count.csv").string());
  counts.header({"interval", "record", "basis_count"});
  CsvWriter freq((dir / "frequency.csv").string());
  freq.header({"interval", "candidate", "region", "prior", "frequency"});
  CsvWriter records((dir / "records.csv").string());
  records.header({"interval", "record", "residual_norm", "error", "basis_count", "active"});
  for (const auto& r : res.intervals) {
    const Problem& p = src.at(r.interval);
    auto cov = r.stats.mean.size() ? coverage_check(r.stats.mean, r.stats.std, r.reference, {1.0, 2.0, 3.0})
                                   : std::vector<double>{0.0, 0.0, 0.0};
    summary.row(r.interval, r.t_end, r.fixed_error, r.mean_error, r.stats.mean_residual,
                static_cast<int>(r.chain.records.size()), cov[0], cov[1], cov[2]);
    for (std::size_t k = 0; k < r.chain.records.size(); ++k) {
      const auto& rec = r.chain.records[k];
      const int ki = static_cast<int>(k);
      residual.row(r.interval, ki, rec.residual_norm);
      error.row(r.interval, ki, rec.error);
      counts.row(r.interval, ki, rec.basis_count);
      records.row(r.interval, ki, rec.residual_norm, rec.error, rec.basis_count, bits(rec.active));
    }
    for (std::size_t c = 0; c < r.stats.frequency.size(); ++c)
      freq.row(r.interval, static_cast<int>(c), p.catalog.cand_region[c], r.prior.candidate_p[c],
               r.stats.frequency[c]);
    if (r.stats.mean.size()) {
      const std::string t = std::to_string(r.interval + 1);
      write_grid(dir / ("mean_t" + t + ".csv"), grid_of(mesh, p, r.stats.mean));
      write_grid(dir / ("std_t" + t + ".csv"), grid_of(mesh, p, r.stats.std));
      write_grid(dir / ("reference_t" + t + ".csv"), grid_of(mesh, p, r.reference));
    }
  }
}

int cmd_sample(const Common& c, const std::string& method) {
  Config cfg = load_config(c);
  if (!method.empty()) cfg.set("sampler.method", method);
  MeshHierarchy mesh = mesh_from_config(cfg);
  RunPlan plan = plan_from_config(cfg);
  CoefficientField field = field_from_config(cfg, mesh);
  auto cached = cached_catalog(cfg, mesh);
  ProblemSource src(mesh, field, plan, cached.get());
  fs::path dir = output_dir(cfg, c, std::string("sample-") + to_string(plan.method));
  MarchResult res = run_posterior(mesh, src, plan);
  write_run(dir, mesh, src, plan, res);
  manifest(dir, cfg, std::string("sample --method ") + to_string(plan.method));
  const auto& last = res.intervals.back();
  spdlog::info("{}: final mean error {:.4g} (fixed {:.4g})", to_string(plan.method), last.mean_error,
               last.fixed_error);
  return 0;
}

// ---------------------------------------------------------------------------
// Post-processing of written runs

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    rows.push_back(std::move(cols));
  }
  return rows;
}

int cmd_stats(const fs::path& run, double burn_in) {
  auto rows = read_csv(run / "records.csv");
  std::map<int, std::vector<std::vector<std::string>>> by_interval;
  for (auto& r : rows) {
    if (r.size() != 6) throw LoadError("malformed records.csv");
    by_interval[std::stoi(r[0])].push_back(r);
  }
  CsvWriter out((run / "stats.csv").string());
  out.header({"interval", "records_used", "mean_residual", "mean_record_error", "mean_basis_count"});
  CsvWriter freq((run / "stats_frequency.csv").string());
  freq.header({"interval", "candidate", "frequency"});
  for (auto& [interval, recs] : by_interval) {
    const int skip = burn_in_count(recs.size(), burn_in);
    const int n = static_cast<int>(recs.size()) - skip;
    double res = 0.0, err = 0.0, cnt = 0.0;
    std::vector<double> f(recs.front()[5].size(), 0.0);
    for (int k = skip; k < static_cast<int>(recs.size()); ++k) {
      const auto& r = recs[static_cast<std::size_t>(k)];
      res += std::stod(r[2]);
      err += std::stod(r[3]);
      cnt += std::stod(r[4]);
      for (std::size_t c = 0; c < f.size() && c < r[5].size(); ++c) f[c] += r[5][c] == '1' ? 1.0 : 0.0;
    }
    out.row(interval, n, res / n, err / n, cnt / n);
    for (std::size_t c = 0; c < f.size(); ++c) freq.row(interval, static_cast<int>(c), f[c] / n);
  }
  return 0;
}

int cmd_compare(const fs::path& a, const fs::path& b, const fs::path& out_dir) {
  auto fa = read_csv(a / "frequency.csv"), fb = read_csv(b / "frequency.csv");
  auto sa = read_csv(a / "summary.csv"), sb = read_csv(b / "summary.csv");
  if (fa.size() != fb.size() || sa.size() != sb.size()) throw LoadError("runs are not comparable");
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> freq;
  for (std::size_t k = 0; k < fa.size(); ++k) {
    freq[std::stoi(fa[k][0])].first.push_back(std::stod(fa[k][4]));
    freq[std::stoi(fb[k][0])].second.push_back(std::stod(fb[k][4]));
  }
  fs::create_directories(out_dir);
  CsvWriter out((out_dir / "compare.csv").string());
  out.header({"interval", "frequency_correlation", "mean_error_a", "mean_error_b"});
  for (std::size_t k = 0; k < sa.size(); ++k) {
    const int interval = std::stoi(sa[k][0]);
    auto& [x, y] = freq[interval];
    out.row(interval, frequency_correlation(x, y), std::stod(sa[k][3]), std::stod(sb[k][3]));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian multiscale sampling for heterogeneous parabolic and wave problems"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(BMSFEM_VERSION));
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "configuration file");
    sub->add_option("--set", common.sets, "override, KEY=VALUE (repeatable)");
    sub->add_option("-o,--out", common.out, "output root (overrides output.dir)");
    sub->add_flag("-q,--quiet", common.quiet, "warnings and errors only");
  };
  std::string field_target, method, run_dir, run_a, run_b, compare_out = ".";
  double burn_in = 0.25;

  auto* gen = app.add_subcommand("generate-field", "write a synthetic channelized coefficient");
  add_common(gen);
  gen->add_option("--output", field_target, "field file path");
  auto* ref = app.add_subcommand("reference", "fine-grid oracle solve");
  add_common(ref);
  auto* basis = app.add_subcommand("basis", "build and cache the multiscale basis");
  add_common(basis);
  auto* fixed = app.add_subcommand("fixed", "permanent-basis trajectory and residual norms");
  add_common(fixed);
  auto* sample = app.add_subcommand("sample", "sample basis selections over the time horizon");
  add_common(sample);
  sample->add_option("--method", method, "sequential or gibbs")->check(CLI::IsMember({"sequential", "gibbs"}));
  auto* stats = app.add_subcommand("stats", "recompute chain statistics of a sampling run");
  stats->add_option("run", run_dir, "sampling output directory")->required();
  stats->add_option("--burn-in", burn_in, "fraction of records discarded")->check(CLI::Range(0.0, 0.999));
  auto* compare = app.add_subcommand("compare", "compare two sampling runs");
  compare->add_option("a", run_a, "first run directory")->required();
  compare->add_option("b", run_b, "second run directory")->required();
  compare->add_option("-o,--out", compare_out, "directory for compare.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  spdlog::set_level(common.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*gen) return cmd_generate(common, field_target);
    if (*ref) return cmd_reference(common);
    if (*basis) return cmd_basis(common);
    if (*fixed) return cmd_fixed(common);
    if (*sample) return cmd_sample(common, method);
    if (*stats) return cmd_stats(run_dir, burn_in);
    if (*compare) return cmd_compare(run_a, run_b, compare_out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
