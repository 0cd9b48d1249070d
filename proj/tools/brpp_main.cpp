// brpp: command-line front end. Every command is a pure function of the
// input files, the config and the seed.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "brpp/depfit.hpp"
#include "brpp/error.hpp"
#include "brpp/maxstable.hpp"
#include "brpp/postproc.hpp"
#include "brpp/rng.hpp"
#include "brpp/synthetic.hpp"
#include "brpp/verify.hpp"
#include "config.hpp"
#include "io.hpp"

namespace fs = std::filesystem;
using namespace brpp;
using namespace brpp::cli;

namespace {

struct Context {
  RunConfig cfg;
  std::uint64_t seed = 0;
  bool quiet = false;
  Dataset data;
  Normalization norm;

  void log(const std::string& msg) const {
    if (!quiet) std::cerr << msg << '\n';
  }
  std::ofstream create(const std::string& name) const {
    const fs::path p = cfg.output_dir / name;
    std::ofstream out(p);
    if (!out) fail(ErrorCategory::invalid_argument, "cannot write " + p.string());
    return out;
  }
};

void load_data(Context& ctx) {
  ctx.data = ingest(ctx.cfg);
  for (const std::string& w : ctx.data.warnings) std::cerr << "warning: " << w << '\n';
  ctx.norm = ensemble_normalization(ctx.data.ensemble, ctx.cfg.spread_floor);
  ctx.log("ingested " + std::to_string(ctx.data.panel.stations()) + " stations, " +
          std::to_string(ctx.data.panel.periods()) + " periods, " + std::to_string(ctx.data.ensemble.members) +
          " members");
}

MarginOptions margin_options(const RunConfig& c) {
  MarginOptions o;
  o.common_shape = c.common_shape;
  o.gev.max_evals = c.gev_max_evals;
  return o;
}

DependenceFitOptions dependence_options(const RunConfig& c) {
  DependenceFitOptions o;
  o.max_evals = c.max_evals;
  o.ftol_rel = c.ftol;
  return o;
}

MarginalFits obtain_margins(const Context& ctx) {
  if (!ctx.cfg.margins_file.empty()) return read_margins(ctx.cfg.margins_file, ctx.data.panel);
  ctx.log("fitting margins");
  return fit_margins(ctx.data.panel, ctx.norm, {}, margin_options(ctx.cfg)).fits();
}

std::vector<ThetaEstimate> estimates(const Context& ctx, const MarginalFits& fits, ModelKind kind) {
  const MaximaPanel& panel = ctx.data.panel;
  std::vector<int> periods(panel.periods());
  for (int p = 0; p < panel.periods(); ++p) periods[p] = p;
  const int comps = kind == ModelKind::bivariate ? 2 : 1;
  const GumbelPanel g = gumbel_panel(panel, ctx.norm, fits, periods, comps);
  if (g.clamped > 0) ctx.log(std::to_string(g.clamped) + " forecast values clamped into the GEV support");
  return estimate_extremal_coeffs(g.values, panel.locations, panel.block_of,
                                  kind == ModelKind::bivariate ? PairScheme::ordered_all_components
                                                               : PairScheme::unordered,
                                  ctx.cfg.max_distance_km);
}

FitResult fit_kind(const Context& ctx, const std::vector<ThetaEstimate>& est, ModelKind kind) {
  const int starts = kind == ModelKind::bivariate ? ctx.cfg.starts_bivariate : ctx.cfg.starts_univariate;
  ctx.log(std::string("fitting the ") + (kind == ModelKind::bivariate ? "bivariate" : "univariate") +
          " dependence model to " + std::to_string(est.size()) + " estimates, " + std::to_string(starts) + " starts");
  return fit_dependence(est, ctx.data.panel.locations, kind,
                        default_starts(kind, ctx.data.panel.locations, starts, ctx.seed), dependence_options(ctx.cfg));
}

// From the dependence file when it has the section, else fitted.
DependenceModel obtain_model(const Context& ctx, const MarginalFits& fits, ModelKind kind) {
  if (!ctx.cfg.dependence_file.empty()) {
    const DependenceFile f = read_dependence(ctx.cfg.dependence_file);
    if (kind == ModelKind::univariate && f.univariate) return *f.univariate;
    if (kind == ModelKind::bivariate && f.bivariate) return *f.bivariate;
  }
  return fit_kind(ctx, estimates(ctx, fits, kind), kind).params;
}

PostprocessOptions postprocess_options(const RunConfig& c) {
  PostprocessOptions o;
  o.mode = c.conditioning;
  o.neighbors = c.neighbors;
  o.sampler.max_rejections = c.max_rejections;
  return o;
}

ScoreOptions score_options(const RunConfig& c) {
  ScoreOptions o;
  o.K = c.K;
  o.chi = c.chi;
  o.es_samples_br = c.es_samples_br;
  o.es_samples_ind = c.es_samples_ind;
  o.es_pairs = c.es_pairs;
  o.postprocess = postprocess_options(c);
  return o;
}

void write_skill(std::ostream& out, const std::string& name, const Skill& s) {
  out << name << ".overall = " << num(s.overall) << '\n'
      << name << ".positive = " << s.positive << '\n'
      << name << ".units = " << s.units << '\n';
}

void write_scores(const Context& ctx, const ScoreReport& r, const std::string& prefix) {
  const MaximaPanel& panel = ctx.data.panel;
  std::ofstream st = ctx.create(prefix + "stations.csv");
  st << "station_id,periods,crps_obs,crps_pred,crps_orig,crps_biv\n";
  for (const StationScore& s : r.stations) {
    const double n = s.periods;
    st << s.station << ',' << s.periods << ',' << num(s.crps_obs / n) << ',' << num(s.crps_pred / n) << ','
       << num(s.crps_orig / n) << ',' << num(s.crps_biv / n) << '\n';
  }
  std::ofstream pa = ctx.create(prefix + "pairs.csv");
  pa << "station_i,station_j,distance_km,periods,es_br,es_ind\n";
  for (const PairScore& p : r.pairs) {
    const double n = p.periods;
    pa << panel.station_ids[p.site_i] << ',' << panel.station_ids[p.site_j] << ',' << num(p.distance) << ','
       << p.periods << ',' << num(p.es_br / n) << ',' << num(p.es_ind / n) << '\n';
  }
  std::ofstream sk = ctx.create(prefix + "skill.txt");
  sk << "seed = " << r.seed << "\nK = " << r.K << "\nes_samples_br = " << r.es_samples_br
     << "\nes_samples_ind = " << r.es_samples_ind << "\nperiods = " << r.periods.size() << "\nclamped = " << r.clamped
     << '\n';
  write_skill(sk, "obs_vs_pred", r.obs_vs_pred);
  write_skill(sk, "obs_vs_orig", r.obs_vs_orig);
  write_skill(sk, "biv_vs_orig", r.biv_vs_orig);
  write_skill(sk, "br_vs_ind", r.br_vs_ind);
}

void cmd_fit_margins(Context& ctx) {
  load_data(ctx);
  const MarginReport rep = fit_margins(ctx.data.panel, ctx.norm, {}, margin_options(ctx.cfg));
  std::ofstream m = ctx.create("margins.csv");
  write_margins(m, ctx.data.panel, rep);
  std::ofstream t = ctx.create("margin_constancy.csv");
  t << "component,parameter,ks_statistic,p_value,common_shape\n";
  const auto rows = [&](const char* name, const ComponentMargins& c) {
    const std::pair<const char*, const ConstancyTest*> tests[] = {
        {"shape", &c.shape}, {"location", &c.location}, {"scale", &c.scale}};
    for (const auto& [param, test] : tests)
      t << name << ',' << param << ',' << num(test->ks.statistic) << ',' << num(test->ks.p_value) << ','
        << num(c.common_shape) << '\n';
  };
  rows("obs", rep.obs);
  rows("pred", rep.pred);
}

void cmd_fit_dependence(Context& ctx) {
  load_data(ctx);
  const MarginalFits fits = obtain_margins(ctx);
  const ModelKind kind = ctx.cfg.model;
  const auto est = estimates(ctx, fits, kind);
  const FitResult fit = fit_kind(ctx, est, kind);
  const MaximaPanel& panel = ctx.data.panel;
  std::ofstream e = ctx.create("extremal_coefficients.csv");
  e << "station_i,station_j,component_i,component_j,distance_km,theta_hat,jackknife_variance\n";
  for (const ThetaEstimate& t : est)
    e << panel.station_ids[t.site_i] << ',' << panel.station_ids[t.site_j] << ',' << t.comp_i + 1 << ','
      << t.comp_j + 1 << ',' << num(distance(panel.locations[t.site_i], panel.locations[t.site_j])) << ','
      << num(t.theta) << ',' << num(t.variance) << '\n';
  std::ofstream d = ctx.create("dependence.txt");
  write_dependence_section(d, fit);
}

void cmd_simulate(Context& ctx) {
  load_data(ctx);
  const DependenceModel model = obtain_model(ctx, obtain_margins(ctx), ctx.cfg.model);
  const auto samples = simulate_br(ctx.data.panel.locations, model, ctx.cfg.replicates, ctx.seed);
  std::ofstream out = ctx.create("simulation.csv");
  out << "replicate,station_id,component,gumbel\n";
  for (const BrSample& s : samples)
    for (int k = 0; k < s.components; ++k)
      for (int i = 0; i < ctx.data.panel.stations(); ++i)
        out << s.replicate << ',' << ctx.data.panel.station_ids[i] << ',' << k + 1 << ',' << num(s.values(i, k))
            << '\n';
  std::ofstream m = ctx.create("simulation_model.txt");
  write_model_section(m, model);
}

void cmd_postprocess(Context& ctx) {
  load_data(ctx);
  const MarginalFits fits = obtain_margins(ctx);
  const auto model = std::get<BivVariogramParams>(obtain_model(ctx, fits, ModelKind::bivariate));
  const MaximaPanel& panel = ctx.data.panel;
  PostProcessor pp(model, panel.locations, fits, postprocess_options(ctx.cfg));
  std::ofstream out = ctx.create("postprocessed.csv");
  out << "period,station_id,clamped";
  for (int k = 1; k <= ctx.cfg.K; ++k) out << ",sample_" << k;
  out << '\n';
  const int n = panel.stations();
  std::vector<double> v(n), m(n), s(n);
  for (int p = 0; p < panel.periods(); ++p) {
    for (int i = 0; i < n; ++i) v[i] = panel.pred(i, p), m[i] = ctx.norm.location(i, p), s[i] = ctx.norm.spread(i, p);
    const PostprocessResult r = pp.run(v, m, s, ctx.cfg.K, stream_seed(ctx.seed, p));
    std::vector<bool> clamped(n, false);
    for (int i : r.clamped_sites) clamped[i] = true;
    for (int i = 0; i < n; ++i) {
      out << panel.period_ids[p] << ',' << panel.station_ids[i] << ',' << (clamped[i] ? 1 : 0);
      for (int k = 0; k < ctx.cfg.K; ++k) out << ',' << num(r.fields(k, i));
      out << '\n';
    }
  }
  std::ofstream md = ctx.create("postprocess_model.txt");
  write_model_section(md, model);
}

void cmd_verify(Context& ctx) {
  load_data(ctx);
  FittedModels models;
  models.margins = obtain_margins(ctx);
  models.spatial = obtain_model(ctx, models.margins, ModelKind::univariate);
  models.joint = std::get<BivVariogramParams>(obtain_model(ctx, models.margins, ModelKind::bivariate));
  ctx.log("scoring");
  const ScoreReport r =
      score_models(ctx.data.panel, ctx.data.ensemble, ctx.norm, models, {}, score_options(ctx.cfg), ctx.seed);
  write_scores(ctx, r, "scores_");
}

void cmd_cross_validate(Context& ctx) {
  load_data(ctx);
  FitOptions fo;
  fo.margins = margin_options(ctx.cfg);
  fo.dependence = dependence_options(ctx.cfg);
  fo.starts_univariate = ctx.cfg.starts_univariate;
  fo.starts_bivariate = ctx.cfg.starts_bivariate;
  fo.max_distance = ctx.cfg.max_distance_km;
  ctx.log("cross-validating over " + std::to_string(ctx.data.panel.block_labels.size()) + " blocks");
  const CrossValidationReport cv =
      cross_validate(ctx.data.panel, ctx.data.ensemble, fo, score_options(ctx.cfg), ctx.seed, ctx.cfg.spread_floor);
  std::ofstream f = ctx.create("cv_folds.csv");
  f << "block,training_periods,training_hash,held_out_periods,obs_vs_pred,obs_vs_orig,biv_vs_orig,br_vs_ind\n";
  for (const FoldReport& fold : cv.folds) {
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016" PRIx64, fold.training_hash);
    f << fold.label << ',' << fold.training_periods.size() << ',' << hash << ',' << fold.scores.periods.size() << ','
      << num(fold.scores.obs_vs_pred.overall) << ',' << num(fold.scores.obs_vs_orig.overall) << ','
      << num(fold.scores.biv_vs_orig.overall) << ',' << num(fold.scores.br_vs_ind.overall) << '\n';
  }
  write_scores(ctx, cv.pooled, "cv_");
}

void cmd_plot_data(Context& ctx) {
  load_data(ctx);
  const MarginalFits fits = obtain_margins(ctx);
  const auto est = estimates(ctx, fits, ModelKind::univariate);
  const ModelKind kind = ctx.cfg.model;
  const DependenceModel model = obtain_model(ctx, fits, kind);
  const MaximaPanel& panel = ctx.data.panel;
  std::ofstream out = ctx.create("plot_data.csv");
  out << "station_i,station_j,distance_km,theta_hat,theta_fitted,weight\n";
  for (const ThetaEstimate& t : est) {
    const Point a = panel.locations[t.site_i], b = panel.locations[t.site_j];
    // Weight of the residual in the fitting objective.
    const double w = t.variance > 0.0 ? (kind == ModelKind::univariate ? 1.0 / t.variance
                                                                        : 1.0 / (t.variance * t.variance))
                                      : 0.0;
    out << panel.station_ids[t.site_i] << ',' << panel.station_ids[t.site_j] << ',' << num(distance(a, b)) << ','
        << num(t.theta) << ',' << num(extremal_coeff(model, a, b, 0, 0)) << ',' << num(w) << '\n';
  }
}

void cmd_synthesize(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  SyntheticConfig sc;
  sc.stations = c.synthetic_stations;
  sc.periods = c.synthetic_periods;
  sc.periods_per_block = c.synthetic_periods_per_block;
  sc.members = c.synthetic_members;
  sc.hours = c.synthetic_hours;
  sc.missing_fraction = c.synthetic_missing_fraction;
  sc.width_km = c.synthetic_width_km;
  sc.height_km = c.synthetic_height_km;
  sc.seed = ctx.seed;
  const SyntheticData syn = generate_synthetic(sc);
  Dataset d;
  d.panel = syn.panel;
  d.ensemble = syn.ensemble;
  char buf[16];
  for (int j = 0; j < sc.members; ++j) std::snprintf(buf, sizeof buf, "m%02d", j + 1), d.members.emplace_back(buf);
  for (int h = 0; h < sc.hours; ++h) std::snprintf(buf, sizeof buf, "h%02d", h + 1), d.hours.emplace_back(buf);
  write_dataset(d, c.output_dir / "observations.csv", c.output_dir / "ensemble_means.csv",
                c.output_dir / "ensemble_max.csv");
  std::ofstream truth = ctx.create("truth_dependence.txt");
  write_model_section(truth, syn.model);
  std::ofstream margins = ctx.create("truth_margins.csv");
  margins << "station_id,component,shape,location,scale\n";
  for (int i = 0; i < sc.stations; ++i)
    for (const auto& [name, p] : {std::pair{"obs", syn.truth.obs[i]}, std::pair{"pred", syn.truth.pred[i]}})
      margins << syn.panel.station_ids[i] << ',' << name << ',' << num(p.shape) << ',' << num(p.location) << ','
              << num(p.scale) << '\n';
  std::ofstream conf = ctx.create("fixture.conf");
  conf << "observations = observations.csv\nensemble_means = ensemble_means.csv\nensemble_max = ensemble_max.csv\n"
       << "seed = " << ctx.seed << '\n';
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::schema: return 2;
    case ErrorCategory::fit_nonconvergence: return 3;
    case ErrorCategory::sampler_nonconvergence: return 4;
    default: return 1;
  }
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<void(Context&)>> commands = {
      {"fit-margins", cmd_fit_margins},     {"fit-dependence", cmd_fit_dependence},
      {"simulate", cmd_simulate},           {"postprocess", cmd_postprocess},
      {"verify", cmd_verify},               {"cross-validate", cmd_cross_validate},
      {"plot-data", cmd_plot_data},         {"synthesize", cmd_synthesize},
  };
  CLI::App app{"Post-processing of ensemble forecasts of spatial wind-gust maxima with Brown-Resnick processes"};
  std::string command, config, out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  std::vector<std::string> names;
  for (const auto& kv : commands) names.push_back(kv.first);
  app.add_option("command", command, "Command to run")->required()->check(CLI::IsMember(names));
  app.add_option("--config", config, "Path of the key = value run configuration")->required();
  app.add_option("--seed", seed, "Master seed; overrides the config");
  app.add_option("--out", out, "Output directory; overrides the config");
  app.add_flag("--quiet", quiet, "Suppress progress messages");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << '\n';
    return 1;
  }

  try {
    Context ctx;
    ctx.cfg = load_config(config);
    if (seed) ctx.cfg.seed = seed;
    if (!out.empty()) ctx.cfg.output_dir = out;
    validate_config(ctx.cfg);
    ctx.seed = *ctx.cfg.seed;
    ctx.quiet = quiet;
    if (command != "synthesize") {
      for (const auto& [key, path] : {std::pair{"observations", &ctx.cfg.observations},
                                      std::pair{"ensemble_means", &ctx.cfg.ensemble_means},
                                      std::pair{"ensemble_max", &ctx.cfg.ensemble_max}})
        if (path->empty()) fail(ErrorCategory::schema, std::string("config: ") + key + " is required");
    }
    fs::create_directories(ctx.cfg.output_dir);
    commands.at(command)(ctx);
    ctx.log(command + ": done");
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << category_name(e.category()) << ": " << one_line(e.what()) << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << '\n';
    return 1;
  }
}
