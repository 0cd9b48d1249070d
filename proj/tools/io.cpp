#include "io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string_view>
#include <unordered_map>

#include "brpp/error.hpp"

namespace brpp::cli {

std::string num(double v) {
  if (std::isnan(v)) return {};
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

[[noreturn]] void schema(const std::string& msg) { fail(ErrorCategory::schema, msg); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Streaming reader for headed comma-separated text without quoting.
class CsvReader {
 public:
  CsvReader(const std::filesystem::path& path, std::string what, std::vector<std::string> required)
      : in_(path), what_(std::move(what)) {
    if (!in_) schema(what_ + ": cannot open " + path.string());
    std::string header;
    if (!std::getline(in_, header) || trim(header).empty())
      schema(what_ + ": empty file; missing header '" + required.front() + "'");
    line_ = 1;
    split(header, names_);
    for (const std::string& r : required) index(r);
  }

  // Column of `name`, or -1 when absent and optional.
  int index(const std::string& name, bool optional = false) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return static_cast<int>(i);
    if (optional) return -1;
    schema(what_ + ": missing header '" + name + "'");
  }

  bool next() {
    while (std::getline(in_, buffer_)) {
      ++line_;
      if (trim(buffer_).empty()) continue;
      split(buffer_, fields_);
      if (fields_.size() != names_.size())
        schema(where() + ": expected " + std::to_string(names_.size()) + " fields, found " +
               std::to_string(fields_.size()));
      return true;
    }
    return false;
  }

  std::string_view field(int column) const { return fields_[column]; }
  int line() const { return line_; }
  std::string where() const { return what_ + " line " + std::to_string(line_); }

  // Empty fields are missing (NaN).
  double number(int column, bool allow_missing) const {
    const std::string_view v = fields_[column];
    if (v.empty()) {
      if (allow_missing) return std::nan("");
      schema(where() + ": empty field '" + std::string(names_[column]) + "'");
    }
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
      schema(where() + ": column '" + std::string(names_[column]) + "' is not a finite number: '" + std::string(v) +
             "'");
    return out;
  }

  std::string_view key(int column) const {
    const std::string_view v = fields_[column];
    if (v.empty()) schema(where() + ": empty field '" + std::string(names_[column]) + "'");
    return v;
  }

 private:
  template <class Out>
  static void split(std::string_view s, Out& out) {
    out.clear();
    for (;;) {
      const auto c = s.find(',');
      out.emplace_back(trim(s.substr(0, c)));
      if (c == std::string_view::npos) break;
      s.remove_prefix(c + 1);
    }
  }

  std::ifstream in_;
  std::string what_;
  std::string buffer_;
  std::vector<std::string> names_;
  std::vector<std::string_view> fields_;
  int line_ = 0;
};

// First-appearance indexing of string keys.
class Index {
 public:
  int add(std::string_view k) {
    const auto [it, inserted] = map_.try_emplace(std::string(k), static_cast<int>(keys_.size()));
    if (inserted) keys_.emplace_back(k);
    return it->second;
  }
  int find(std::string_view k) const {
    const auto it = map_.find(std::string(k));
    return it == map_.end() ? -1 : it->second;
  }
  const std::vector<std::string>& keys() const { return keys_; }
  int size() const { return static_cast<int>(keys_.size()); }

 private:
  std::unordered_map<std::string, int> map_;
  std::vector<std::string> keys_;
};

[[noreturn]] void duplicate(const std::string& what, int first, int second, const std::string& key) {
  schema(what + ": duplicate row for " + key + " at lines " + std::to_string(first) + " and " + std::to_string(second));
}

}  // namespace

Dataset ingest(const RunConfig& c) {
  Dataset d;
  MaximaPanel& panel = d.panel;

  // Observations.
  struct ObsRow {
    int station, period;
    double value;
  };
  std::vector<ObsRow> rows;
  Index stations, periods, months;
  std::vector<Point> coords;
  std::vector<int> coord_line, month_of, month_line;
  {
    CsvReader r(c.observations, "observations", {"station_id", c.x_column, c.y_column, "period", "v_max_obs"});
    const int cs = r.index("station_id"), cx = r.index(c.x_column), cy = r.index(c.y_column),
              cp = r.index("period"), cv = r.index("v_max_obs"), cm = r.index(c.month_column, true);
    std::map<std::pair<int, int>, int> seen;
    while (r.next()) {
      const int s = stations.add(r.key(cs));
      const Point pt{r.number(cx, false), r.number(cy, false)};
      if (s == static_cast<int>(coords.size())) {
        coords.push_back(pt);
        coord_line.push_back(r.line());
      } else if (!(coords[s] == pt)) {
        schema(r.where() + ": coordinates of station '" + std::string(r.field(cs)) + "' differ from line " +
               std::to_string(coord_line[s]));
      }
      const int p = periods.add(r.key(cp));
      if (cm >= 0) {
        const int m = months.add(r.key(cm));
        if (p == static_cast<int>(month_of.size())) {
          month_of.push_back(m);
          month_line.push_back(r.line());
        } else if (month_of[p] != m) {
          schema(r.where() + ": month label of period '" + std::string(r.field(cp)) + "' differs from line " +
                 std::to_string(month_line[p]));
        }
      }
      const auto [it, fresh] = seen.try_emplace({s, p}, r.line());
      if (!fresh)
        duplicate("observations", it->second, r.line(),
                  "(" + std::string(r.field(cs)) + ", " + std::string(r.field(cp)) + ")");
      const double v = r.number(cv, true);
      if (v < 0.0) schema(r.where() + ": negative v_max_obs");
      rows.push_back({s, p, v});
    }
  }
  if (stations.size() == 0) schema("observations: no data rows");

  const int n_all = stations.size(), np = periods.size();
  Eigen::MatrixXd obs = Eigen::MatrixXd::Constant(n_all, np, std::nan(""));
  for (const ObsRow& row : rows) obs(row.station, row.period) = row.value;
  std::vector<int> keep_of(n_all, -1);
  for (int s = 0; s < n_all; ++s) {
    if (obs.row(s).array().isNaN().all()) {
      d.warnings.push_back("station '" + stations.keys()[s] + "' has no observations; dropped");
      continue;
    }
    keep_of[s] = static_cast<int>(panel.station_ids.size());
    panel.station_ids.push_back(stations.keys()[s]);
    panel.locations.push_back(coords[s]);
  }
  const int n = panel.stations();
  if (n < 2) schema("observations: fewer than two stations with data");
  panel.period_ids = periods.keys();
  if (!month_of.empty()) {
    panel.block_labels = months.keys();
    panel.block_of = month_of;
  } else {
    for (int p = 0; p < np; ++p) {
      const int b = p / c.periods_per_block;
      if (b == static_cast<int>(panel.block_labels.size())) {
        char buf[24];
        std::snprintf(buf, sizeof buf, "B%02d", b + 1);
        panel.block_labels.emplace_back(buf);
      }
      panel.block_of.push_back(b);
    }
  }
  panel.obs.resize(n, np);
  for (int s = 0; s < n_all; ++s)
    if (keep_of[s] >= 0) panel.obs.row(keep_of[s]) = obs.row(s);

  const auto station_of = [&](const CsvReader& r, int col) {
    const int s = stations.find(r.key(col));
    if (s < 0) schema(r.where() + ": unknown station '" + std::string(r.field(col)) + "'");
    return keep_of[s];
  };
  const auto period_of = [&](const CsvReader& r, int col) {
    const int p = periods.find(r.key(col));
    if (p < 0) schema(r.where() + ": unknown period '" + std::string(r.field(col)) + "'");
    return p;
  };

  // Member and hour labels, in order of first appearance.
  Index members, hours;
  {
    CsvReader r(c.ensemble_max, "ensemble_max", {"station_id", "period", "member", "v_max"});
    const int cj = r.index("member");
    while (r.next()) members.add(r.key(cj));
  }
  {
    CsvReader r(c.ensemble_means, "ensemble_means", {"station_id", "period", "member", "hour", "v_mean"});
    const int cj = r.index("member"), ch = r.index("hour");
    while (r.next()) {
      members.add(r.key(cj));
      hours.add(r.key(ch));
    }
  }
  if (members.size() < 2) schema("ensemble_max: fewer than two members");
  if (hours.size() < 1) schema("ensemble_means: no data rows");
  d.members = members.keys();
  d.hours = hours.keys();
  EnsemblePanel& e = d.ensemble;
  e = EnsemblePanel(n, np, members.size(), hours.size());
  {
    CsvReader r(c.ensemble_max, "ensemble_max", {"station_id", "period", "member", "v_max"});
    const int cs = r.index("station_id"), cp = r.index("period"), cj = r.index("member"), cv = r.index("v_max");
    std::vector<int> line(e.maxima.size(), 0);
    while (r.next()) {
      const int s = station_of(r, cs), p = period_of(r, cp);
      if (s < 0) continue;
      const int j = members.find(r.field(cj));
      const std::size_t at = e.cell(s, p) * e.members + j;
      if (line[at] != 0)
        duplicate("ensemble_max", line[at], r.line(),
                  "(" + std::string(r.field(cs)) + ", " + std::string(r.field(cp)) + ", " + std::string(r.field(cj)) +
                      ")");
      line[at] = r.line();
      const double v = r.number(cv, true);
      if (v < 0.0) schema(r.where() + ": negative v_max");
      e.maxima[at] = v;
    }
  }
  {
    CsvReader r(c.ensemble_means, "ensemble_means", {"station_id", "period", "member", "hour", "v_mean"});
    const int cs = r.index("station_id"), cp = r.index("period"), cj = r.index("member"), ch = r.index("hour"),
              cv = r.index("v_mean");
    std::vector<int> line(e.means.size(), 0);
    while (r.next()) {
      const int s = station_of(r, cs), p = period_of(r, cp);
      if (s < 0) continue;
      const int j = members.find(r.field(cj)), h = hours.find(r.field(ch));
      const std::size_t at = (e.cell(s, p) * e.members + j) * e.hours + h;
      if (line[at] != 0)
        duplicate("ensemble_means", line[at], r.line(),
                  "(" + std::string(r.field(cs)) + ", " + std::string(r.field(cp)) + ", " + std::string(r.field(cj)) +
                      ", " + std::string(r.field(ch)) + ")");
      line[at] = r.line();
      const double v = r.number(cv, true);
      if (v < 0.0) schema(r.where() + ": negative v_mean");
      e.means[at] = v;
    }
  }
  validate_ensemble(e);
  panel.pred = vmax_pred(e);
  validate_panel(panel);
  return d;
}

void write_dataset(const Dataset& d, const std::filesystem::path& observations,
                   const std::filesystem::path& ensemble_means, const std::filesystem::path& ensemble_max) {
  const MaximaPanel& panel = d.panel;
  const EnsemblePanel& e = d.ensemble;
  const auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) fail(ErrorCategory::invalid_argument, "cannot write " + p.string());
    return out;
  };
  std::ofstream o = open(observations);
  o << "station_id,x_km,y_km,period,month,v_max_obs\n";
  for (int s = 0; s < panel.stations(); ++s)
    for (int p = 0; p < panel.periods(); ++p)
      o << panel.station_ids[s] << ',' << num(panel.locations[s].x) << ',' << num(panel.locations[s].y) << ','
        << panel.period_ids[p] << ',' << panel.block_labels[panel.block_of[p]] << ',' << num(panel.obs(s, p)) << '\n';
  std::ofstream mx = open(ensemble_max);
  mx << "station_id,period,member,v_max\n";
  std::ofstream mn = open(ensemble_means);
  mn << "station_id,period,member,hour,v_mean\n";
  for (int s = 0; s < panel.stations(); ++s)
    for (int p = 0; p < panel.periods(); ++p)
      for (int j = 0; j < e.members; ++j) {
        mx << panel.station_ids[s] << ',' << panel.period_ids[p] << ',' << d.members[j] << ','
           << num(e.maximum(s, p, j)) << '\n';
        for (int h = 0; h < e.hours; ++h)
          mn << panel.station_ids[s] << ',' << panel.period_ids[p] << ',' << d.members[j] << ',' << d.hours[h] << ','
             << num(e.mean(s, p, j, h)) << '\n';
      }
  if (!o || !mx || !mn) fail(ErrorCategory::invalid_argument, "writing the dataset failed");
}

void write_margins(std::ostream& out, const MaximaPanel& panel, const MarginReport& report) {
  out << "station_id,component,shape,location,scale,se_shape,se_location,se_scale,log_likelihood,n\n";
  const auto rows = [&](const char* name, const ComponentMargins& m) {
    for (int s = 0; s < panel.stations(); ++s) {
      const StationGevFit& f = m.final[s];
      out << panel.station_ids[s] << ',' << name << ',' << num(f.params.shape) << ',' << num(f.params.location) << ','
          << num(f.params.scale) << ',' << num(f.std_errors[0]) << ',' << num(f.std_errors[1]) << ','
          << num(f.std_errors[2]) << ',' << num(f.log_likelihood) << ',' << f.sample_count << '\n';
    }
  };
  rows("obs", report.obs);
  rows("pred", report.pred);
}

MarginalFits read_margins(const std::filesystem::path& path, const MaximaPanel& panel) {
  CsvReader r(path, "margins", {"station_id", "component", "shape", "location", "scale"});
  const int cs = r.index("station_id"), cc = r.index("component"), cxi = r.index("shape"),
            cmu = r.index("location"), csig = r.index("scale");
  std::map<std::pair<std::string, std::string>, GevParams> found;
  while (r.next()) {
    const std::string comp(r.key(cc));
    if (comp != "obs" && comp != "pred") schema(r.where() + ": component must be obs or pred");
    const GevParams p{r.number(cxi, false), r.number(cmu, false), r.number(csig, false)};
    if (!(p.scale > 0.0)) schema(r.where() + ": scale must be positive");
    if (!found.try_emplace({std::string(r.key(cs)), comp}, p).second) schema(r.where() + ": repeated station row");
  }
  MarginalFits fits;
  for (const std::string& id : panel.station_ids) {
    const auto o = found.find({id, "obs"}), p = found.find({id, "pred"});
    if (o == found.end() || p == found.end()) schema("margins: no obs and pred rows for station '" + id + "'");
    fits.obs.push_back(o->second);
    fits.pred.push_back(p->second);
  }
  return fits;
}

void write_model_section(std::ostream& out, const DependenceModel& model) {
  if (const auto* u = std::get_if<UnivVariogramParams>(&model)) {
    out << "[univariate]\n"
        << "scale = " << num(u->scale) << "\naniso_ratio = " << num(u->aniso.ratio)
        << "\naniso_angle = " << num(u->aniso.angle) << "\nexponent = " << num(u->exponent) << '\n';
    return;
  }
  const auto& b = std::get<BivVariogramParams>(model);
  out << "[bivariate]\n"
      << "sill = " << num(b.sill) << "\ncommon_scale = " << num(b.common_scale)
      << "\naniso_ratio = " << num(b.aniso.ratio) << "\naniso_angle = " << num(b.aniso.angle)
      << "\nlong_range = " << num(b.long_range) << "\nconstant = " << num(b.constant) << "\namp1 = " << num(b.amp1)
      << "\nsmooth1 = " << num(b.smooth1) << "\namp2 = " << num(b.amp2) << "\nsmooth2 = " << num(b.smooth2)
      << "\nmatern_scale = " << num(b.matern_scale) << "\nrho = " << num(b.rho) << '\n';
}

void write_dependence_section(std::ostream& out, const FitResult& fit) {
  write_model_section(out, fit.params);
  out << "objective = " << num(fit.objective) << "\niterations = " << fit.iterations
      << "\nevaluations = " << fit.evaluations << "\nconverged = " << (fit.converged ? 1 : 0)
      << "\nexcluded_pairs = " << fit.excluded_pairs << "\nbest_start = " << fit.best_start << '\n';
}

DependenceFile read_dependence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) schema("dependence file: cannot open " + path.string());
  static const std::set<std::string> diagnostics = {"objective", "iterations", "evaluations",
                                                    "converged", "excluded_pairs", "best_start"};
  DependenceFile out;
  UnivVariogramParams u;
  BivVariogramParams b;
  std::set<std::string> seen_u, seen_b;
  std::string section, line;
  for (int number = 1; std::getline(in, line); ++number) {
    const std::string where = "dependence file line " + std::to_string(number);
    const std::string body(trim(line));
    if (body.empty() || body.front() == '#') continue;
    if (body.front() == '[') {
      section = body;
      if (section != "[univariate]" && section != "[bivariate]") schema(where + ": unknown section " + section);
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos || section.empty()) schema(where + ": expected key = value inside a section");
    const std::string key(trim(std::string_view(body).substr(0, eq)));
    const std::string value(trim(std::string_view(body).substr(eq + 1)));
    if (diagnostics.count(key)) continue;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size()) schema(where + ": not a number: '" + value + "'");
    if (section == "[univariate]") {
      std::map<std::string, double*> f = {{"scale", &u.scale}, {"aniso_ratio", &u.aniso.ratio},
                                          {"aniso_angle", &u.aniso.angle}, {"exponent", &u.exponent}};
      if (!f.count(key)) schema(where + ": unknown key '" + key + "'");
      *f[key] = v;
      seen_u.insert(key);
    } else {
      std::map<std::string, double*> f = {
          {"sill", &b.sill},         {"common_scale", &b.common_scale}, {"aniso_ratio", &b.aniso.ratio},
          {"aniso_angle", &b.aniso.angle}, {"long_range", &b.long_range}, {"constant", &b.constant},
          {"amp1", &b.amp1},         {"smooth1", &b.smooth1},           {"amp2", &b.amp2},
          {"smooth2", &b.smooth2},   {"matern_scale", &b.matern_scale}, {"rho", &b.rho}};
      if (!f.count(key)) schema(where + ": unknown key '" + key + "'");
      *f[key] = v;
      seen_b.insert(key);
    }
  }
  if (!seen_u.empty()) {
    if (seen_u.size() != 4) schema("dependence file: incomplete [univariate] section");
    if (const auto bad = validate_univ_params(u)) schema("dependence file: " + bad->field + ": " + bad->message);
    out.univariate = u;
  }
  if (!seen_b.empty()) {
    if (seen_b.size() != 12) schema("dependence file: incomplete [bivariate] section");
    if (const auto bad = validate_biv_params(b)) schema("dependence file: " + bad->field + ": " + bad->message);
    out.bivariate = b;
  }
  return out;
}

}  // namespace brpp::cli
