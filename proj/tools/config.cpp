#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "brpp/error.hpp"

namespace brpp::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& v, const std::string& where) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) fail(ErrorCategory::schema, where + ": not a number: '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorCategory::schema, where + ": expected true or false, got '" + v + "'");
}

}  // namespace

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::schema, "config: cannot open " + path.string());
  const std::filesystem::path base = path.parent_path();
  RunConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const auto file = [&](std::filesystem::path& dst) {
    return Setter([&dst, &base](const std::string& v, const std::string&) {
      const std::filesystem::path p(v);
      dst = p.is_absolute() ? p : base / p;
    });
  };
  const auto text = [](std::string& dst) { return Setter([&dst](const std::string& v, const std::string&) { dst = v; }); };
  const auto integer = [](int& dst) {
    return Setter([&dst](const std::string& v, const std::string& w) { dst = parse_number<int>(v, w); });
  };
  const auto real = [](double& dst) {
    return Setter([&dst](const std::string& v, const std::string& w) {
      dst = v == "inf" ? std::numeric_limits<double>::infinity() : parse_number<double>(v, w);
    });
  };
  const std::map<std::string, Setter> keys = {
      {"observations", file(c.observations)},
      {"ensemble_means", file(c.ensemble_means)},
      {"ensemble_max", file(c.ensemble_max)},
      {"margins_file", file(c.margins_file)},
      {"dependence_file", file(c.dependence_file)},
      {"output_dir", file(c.output_dir)},
      {"x_column", text(c.x_column)},
      {"y_column", text(c.y_column)},
      {"month_column", text(c.month_column)},
      {"periods_per_block", integer(c.periods_per_block)},
      {"model",
       [&](const std::string& v, const std::string& w) {
         if (v == "univariate") c.model = ModelKind::univariate;
         else if (v == "bivariate") c.model = ModelKind::bivariate;
         else fail(ErrorCategory::schema, w + ": model must be univariate or bivariate");
       }},
      {"starts_univariate", integer(c.starts_univariate)},
      {"starts_bivariate", integer(c.starts_bivariate)},
      {"max_evals", integer(c.max_evals)},
      {"ftol", real(c.ftol)},
      {"gev_max_evals", integer(c.gev_max_evals)},
      {"common_shape", [&](const std::string& v, const std::string& w) { c.common_shape = parse_bool(v, w); }},
      {"max_distance_km", real(c.max_distance_km)},
      {"K", integer(c.K)},
      {"chi", real(c.chi)},
      {"es_samples_br", integer(c.es_samples_br)},
      {"es_samples_ind", integer(c.es_samples_ind)},
      {"es_pairs", integer(c.es_pairs)},
      {"conditioning",
       [&](const std::string& v, const std::string& w) {
         if (v == "local") c.conditioning = ConditioningMode::local;
         else if (v == "joint") c.conditioning = ConditioningMode::joint;
         else fail(ErrorCategory::schema, w + ": conditioning must be local or joint");
       }},
      {"neighbors", integer(c.neighbors)},
      {"spread_floor", real(c.spread_floor)},
      {"max_rejections",
       [&](const std::string& v, const std::string& w) { c.max_rejections = parse_number<long>(v, w); }},
      {"seed", [&](const std::string& v, const std::string& w) { c.seed = parse_number<std::uint64_t>(v, w); }},
      {"replicates", integer(c.replicates)},
      {"synthetic_stations", integer(c.synthetic_stations)},
      {"synthetic_periods", integer(c.synthetic_periods)},
      {"synthetic_periods_per_block", integer(c.synthetic_periods_per_block)},
      {"synthetic_members", integer(c.synthetic_members)},
      {"synthetic_hours", integer(c.synthetic_hours)},
      {"synthetic_missing_fraction", real(c.synthetic_missing_fraction)},
      {"synthetic_width_km", real(c.synthetic_width_km)},
      {"synthetic_height_km", real(c.synthetic_height_km)},
  };

  std::set<std::string> seen;
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    const std::string where = "config line " + std::to_string(number);
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail(ErrorCategory::schema, where + ": expected key = value");
    const std::string key = trim(body.substr(0, eq)), value = trim(body.substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) fail(ErrorCategory::schema, where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) fail(ErrorCategory::schema, where + ": repeated key '" + key + "'");
    if (value.empty()) fail(ErrorCategory::schema, where + ": empty value for '" + key + "'");
    it->second(value, where);
  }
  return c;
}

void validate_config(const RunConfig& c) {
  const auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCategory::schema, "config: " + what);
  };
  check(c.seed.has_value(), "seed is required (set it in the config or pass --seed)");
  check(c.periods_per_block >= 1, "periods_per_block must be >= 1");
  check(c.starts_univariate >= 1 && c.starts_bivariate >= 1, "starts must be >= 1");
  check(c.max_evals >= 1 && c.gev_max_evals >= 1, "evaluation budgets must be >= 1");
  check(c.ftol > 0.0, "ftol must be positive");
  check(c.max_distance_km > 0.0, "max_distance_km must be positive");
  check(c.K >= 1, "K must be >= 1");
  check(c.chi > 0.0 && c.chi < 2.0, "chi must lie in (0, 2)");
  check(c.es_samples_br >= 1 && c.es_samples_ind >= 1 && c.es_pairs >= 0, "energy-score sizes must be positive");
  check(c.neighbors >= 0, "neighbors must be >= 0");
  check(c.spread_floor > 0.0, "spread_floor must be positive");
  check(c.max_rejections >= 1, "max_rejections must be >= 1");
  check(c.replicates >= 1, "replicates must be >= 1");
  check(c.synthetic_stations >= 2 && c.synthetic_periods >= 2 && c.synthetic_periods_per_block >= 1 &&
            c.synthetic_members >= 2 && c.synthetic_hours >= 1,
        "synthetic sizes too small");
  check(c.synthetic_missing_fraction >= 0.0 && c.synthetic_missing_fraction < 1.0,
        "synthetic_missing_fraction must lie in [0, 1)");
  check(c.synthetic_width_km > 0.0 && c.synthetic_height_km > 0.0, "synthetic extent must be positive");
}

}  // namespace brpp::cli
