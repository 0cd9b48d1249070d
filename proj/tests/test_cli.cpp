#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "../tools/config.hpp"
#include "../tools/io.hpp"
#include "brpp/error.hpp"
#include "brpp/synthetic.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace brpp;
using namespace brpp::cli;

namespace {

const fs::path kWork = fs::path(BRPP_TEST_WORKDIR) / "cli";

fs::path fresh_dir(const std::string& name) {
  const fs::path d = kWork / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(BRPP_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Dataset small_dataset(double missing = 0.0) {
  SyntheticConfig sc;
  sc.stations = 6;
  sc.periods = 40;
  sc.periods_per_block = 20;
  sc.members = 3;
  sc.hours = 2;
  sc.missing_fraction = missing;
  sc.seed = 21;
  const SyntheticData syn = generate_synthetic(sc);
  Dataset d;
  d.panel = syn.panel;
  d.ensemble = syn.ensemble;
  d.members = {"a", "b", "c"};
  d.hours = {"h1", "h2"};
  return d;
}

RunConfig config_for(const fs::path& dir) {
  RunConfig c;
  c.observations = dir / "obs.csv";
  c.ensemble_means = dir / "means.csv";
  c.ensemble_max = dir / "max.csv";
  return c;
}

bool same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
  }
  return true;
}

std::string error_of(const RunConfig& c) {
  try {
    ingest(c);
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::schema);
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("emitted panels re-ingest to identical matrices") {
  const fs::path dir = fresh_dir("roundtrip");
  const Dataset d = small_dataset(0.1);
  const RunConfig c = config_for(dir);
  write_dataset(d, c.observations, c.ensemble_means, c.ensemble_max);
  const Dataset back = ingest(c);
  CHECK(back.panel.station_ids == d.panel.station_ids);
  CHECK(back.panel.period_ids == d.panel.period_ids);
  CHECK(back.panel.block_labels == d.panel.block_labels);
  CHECK(back.panel.block_of == d.panel.block_of);
  CHECK(back.panel.locations == d.panel.locations);
  CHECK(same(back.panel.obs, d.panel.obs));
  CHECK(same(back.panel.pred, d.panel.pred));
  CHECK(back.ensemble.means == d.ensemble.means);
  CHECK(back.ensemble.maxima == d.ensemble.maxima);
  CHECK(back.members == d.members);
  CHECK(back.hours == d.hours);
  CHECK(back.warnings.empty());
}

TEST_CASE("schema diagnostics") {
  const fs::path dir = fresh_dir("schema");
  const Dataset d = small_dataset();
  RunConfig c = config_for(dir);
  write_dataset(d, c.observations, c.ensemble_means, c.ensemble_max);
  const std::string obs = read_text(c.observations);

  SUBCASE("empty observation file names the missing header") {
    write_text(c.observations, "");
    CHECK(error_of(c) == "observations: empty file; missing header 'station_id'");
  }
  SUBCASE("missing column") {
    write_text(c.observations, "station_id,x_km,y_km,period\nS001,1,2,P1\n");
    CHECK(error_of(c) == "observations: missing header 'v_max_obs'");
  }
  SUBCASE("duplicate (station, period) rows cite both lines") {
    std::istringstream in(obs);
    std::string header, first, second;
    std::getline(in, header);
    std::getline(in, first);
    std::getline(in, second);
    write_text(c.observations, obs + first + "\n");
    const int total_lines = static_cast<int>(std::count(obs.begin(), obs.end(), '\n')) + 1;
    CHECK(error_of(c) ==
          "observations: duplicate row for (S001, P0001) at lines 2 and " + std::to_string(total_lines));
  }
  SUBCASE("duplicate ensemble rows cite both lines") {
    const std::string mx = read_text(c.ensemble_max);
    const std::string row = mx.substr(mx.find('\n') + 1, mx.find('\n', mx.find('\n') + 1) - mx.find('\n'));
    write_text(c.ensemble_max, mx + row);
    const int total_lines = static_cast<int>(std::count(mx.begin(), mx.end(), '\n')) + 1;
    CHECK(error_of(c) == "ensemble_max: duplicate row for (S001, P0001, a) at lines 2 and " +
                             std::to_string(total_lines));
  }
  SUBCASE("bad numbers cite the line and column") {
    write_text(c.observations, "station_id,x_km,y_km,period,v_max_obs\nS001,1,2,P1,fast\n");
    CHECK(error_of(c) == "observations line 2: column 'v_max_obs' is not a finite number: 'fast'");
  }
  SUBCASE("unknown station in the ensemble") {
    write_text(c.ensemble_max, read_text(c.ensemble_max) + "S999,P0001,a,3\n");
    CHECK(error_of(c).find("unknown station 'S999'") != std::string::npos);
  }
  SUBCASE("inconsistent coordinates") {
    write_text(c.observations, obs + "S001,0,0,P9999,M01,1\n");
    CHECK(error_of(c).find("coordinates of station 'S001' differ from line 2") != std::string::npos);
  }
}

TEST_CASE("stations without observations are dropped with a warning") {
  const fs::path dir = fresh_dir("drop");
  Dataset d = small_dataset();
  d.panel.obs.row(2).setConstant(std::nan(""));
  const RunConfig c = config_for(dir);
  write_dataset(d, c.observations, c.ensemble_means, c.ensemble_max);
  const Dataset back = ingest(c);
  REQUIRE(back.warnings.size() == 1);
  CHECK(back.warnings[0] == "station 'S003' has no observations; dropped");
  CHECK(back.panel.stations() == 5);
  CHECK(back.panel.station_ids[2] == "S004");
  CHECK(back.ensemble.stations == 5);
  CHECK(back.ensemble.maximum(2, 0, 0) == d.ensemble.maximum(3, 0, 0));
}

TEST_CASE("blocks fall back to consecutive periods without a month column") {
  const fs::path dir = fresh_dir("blocks");
  write_text(dir / "obs.csv", "station_id,x_km,y_km,period,v_max_obs\nA,0,0,p1,1\nA,0,0,p2,2\nA,0,0,p3,3\n"
                              "B,1,0,p1,1\nB,1,0,p2,2\nB,1,0,p3,3\n");
  std::string mx = "station_id,period,member,v_max\n", mn = "station_id,period,member,hour,v_mean\n";
  for (const char* s : {"A", "B"})
    for (const char* p : {"p1", "p2", "p3"})
      for (const char* j : {"x", "y"}) {
        mx += std::string(s) + "," + p + "," + j + ",2\n";
        mn += std::string(s) + "," + p + "," + j + ",0,1\n";
      }
  write_text(dir / "max.csv", mx);
  write_text(dir / "means.csv", mn);
  RunConfig c = config_for(dir);
  c.periods_per_block = 2;
  const Dataset d = ingest(c);
  CHECK(d.panel.block_of == std::vector<int>{0, 0, 1});
  CHECK(d.panel.block_labels == std::vector<std::string>{"B01", "B02"});
}

TEST_CASE("config parsing") {
  const fs::path dir = fresh_dir("config");
  write_text(dir / "a.conf", "# comment\nobservations = data/obs.csv\nseed = 7  # trailing\nK = 20\nmodel = univariate\n"
                             "max_distance_km = inf\n");
  const RunConfig c = load_config(dir / "a.conf");
  CHECK(c.observations == dir / "data/obs.csv");
  CHECK(c.seed == 7u);
  CHECK(c.K == 20);
  CHECK(c.model == ModelKind::univariate);
  CHECK(std::isinf(c.max_distance_km));
  validate_config(c);

  const auto error = [&](const std::string& text) {
    write_text(dir / "b.conf", text);
    try {
      validate_config(load_config(dir / "b.conf"));
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::schema);
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(error("seed = 1\nwhatever = 2\n") == "config line 2: unknown key 'whatever'");
  CHECK(error("seed = 1\nseed = 2\n") == "config line 2: repeated key 'seed'");
  CHECK(error("K = 3\n") == "config: seed is required (set it in the config or pass --seed)");
  CHECK(error("seed = 1\nchi = 2\n") == "config: chi must lie in (0, 2)");
  CHECK(error("seed = 1\nftol = 0\n") == "config: ftol must be positive");
  CHECK(error("seed = x\n") == "config line 1: not a number: 'x'");
}

TEST_CASE("command-line tool on the synthetic fixture") {
  const fs::path dir = fresh_dir("tool");
  write_text(dir / "syn.conf",
             "seed = 5\nsynthetic_stations = 12\nsynthetic_periods = 90\nsynthetic_hours = 3\n"
             "synthetic_members = 8\noutput_dir = fixture\n");
  REQUIRE(run_cli("synthesize --quiet --config " + (dir / "syn.conf").string(), dir / "log.txt") == 0);
  write_text(dir / "run.conf",
             "observations = fixture/observations.csv\nensemble_means = fixture/ensemble_means.csv\n"
             "ensemble_max = fixture/ensemble_max.csv\nseed = 3\nstarts_univariate = 3\nstarts_bivariate = 2\n"
             "max_evals = 1200\nK = 30\nes_pairs = 10\nes_samples_br = 200\n");

  SUBCASE("fit-margins writes one row per station and component with positive scales") {
    REQUIRE(run_cli("fit-margins --quiet --config " + (dir / "run.conf").string() + " --out " +
                        (dir / "margins").string(),
                    dir / "log.txt") == 0);
    std::ifstream in(dir / "margins" / "margins.csv");
    std::string line;
    std::getline(in, line);
    std::map<std::string, int> rows;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
      REQUIRE(f.size() == 10);
      ++rows[f[1]];
      CHECK(std::stod(f[4]) > 0.0);
    }
    CHECK(rows["obs"] == 12);
    CHECK(rows["pred"] == 12);
  }

  SUBCASE("postprocess then verify twice: byte-identical and positive skill") {
    const std::string base = "--quiet --config " + (dir / "run.conf").string() + " --out ";
    REQUIRE(run_cli("postprocess " + base + (dir / "a").string(), dir / "log.txt") == 0);
    REQUIRE(run_cli("verify " + base + (dir / "a").string(), dir / "log.txt") == 0);
    REQUIRE(run_cli("verify " + base + (dir / "b").string(), dir / "log.txt") == 0);
    for (const char* f : {"scores_skill.txt", "scores_stations.csv", "scores_pairs.csv"})
      CHECK(read_text(dir / "a" / f) == read_text(dir / "b" / f));
    const std::string skill = read_text(dir / "a" / "scores_skill.txt");
    const auto at = skill.find("biv_vs_orig.overall = ");
    REQUIRE(at != std::string::npos);
    CHECK(std::stod(skill.substr(at + 22)) > 0.0);
  }

  SUBCASE("a different seed changes sampled output") {
    const std::string base = "--quiet --config " + (dir / "run.conf").string() + " --out ";
    REQUIRE(run_cli("simulate " + base + (dir / "s1").string() + " --seed 1", dir / "log.txt") == 0);
    REQUIRE(run_cli("simulate " + base + (dir / "s2").string() + " --seed 2", dir / "log.txt") == 0);
    CHECK(read_text(dir / "s1" / "simulation.csv") != read_text(dir / "s2" / "simulation.csv"));
  }

  SUBCASE("exit codes and single-line error categories") {
    write_text(dir / "bad.conf", "seed = 1\nobservations = nowhere.csv\nensemble_means = x\nensemble_max = y\n");
    CHECK(run_cli("verify --config " + (dir / "bad.conf").string(), dir / "err.txt") == 2);
    CHECK(read_text(dir / "err.txt") == "error: schema: observations: cannot open " + (dir / "nowhere.csv").string() + "\n");

    write_text(dir / "short.conf", "seed = 5\nsynthetic_stations = 4\nsynthetic_periods = 10\noutput_dir = short\n");
    REQUIRE(run_cli("synthesize --quiet --config " + (dir / "short.conf").string(), dir / "log.txt") == 0);
    write_text(dir / "short" / "run.conf",
               "observations = observations.csv\nensemble_means = ensemble_means.csv\nensemble_max = ensemble_max.csv\n"
               "seed = 1\n");
    CHECK(run_cli("fit-margins --quiet --config " + (dir / "short" / "run.conf").string(), dir / "err.txt") == 3);
    CHECK(read_text(dir / "err.txt").rfind("error: fit_nonconvergence: ", 0) == 0);

    CHECK(run_cli("nonsense --config " + (dir / "run.conf").string(), dir / "err.txt") == 1);
    CHECK(read_text(dir / "err.txt").rfind("error: usage: ", 0) == 0);
  }
}
