#include "aggbounds/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace aggbounds::io {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// one CSV line -> cells; double quotes wrap cells that contain commas, and a
// doubled quote inside a quoted cell is a literal quote
std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

[[noreturn]] void fail(const std::string& where, const std::string& message) {
  throw ValidationError({{where, message}});
}

double parse_double(const std::string& cell, const std::string& where) {
  const std::string t = trim(cell);
  double v = 0.0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size())
    fail(where, "'" + cell + "' is not a number");
  return v;
}

long long parse_count(const std::string& cell, const std::string& where) {
  const std::string t = trim(cell);
  long long v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || v < 0)
    fail(where, "'" + cell + "' is not a nonnegative count");
  return v;
}

bool blank(const std::vector<std::string>& row, int col) {
  return col < 0 || col >= static_cast<int>(row.size()) || row[col].empty();
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

int CsvTable::require_column(const std::string& name) const {
  const int c = column(name);
  if (c < 0) fail(path, "missing required column '" + name + "'");
  return c;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open file");
  CsvTable t;
  t.path = path;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (first) {
      for (auto& c : cells) t.header.push_back(lower(c));
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) fail(path, "file has no header row");
  return t;
}

SupportFile read_support_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  const int id_col = t.require_column("point_id");
  SupportFile out;
  for (size_t i = 0; i < t.header.size(); ++i)
    if (static_cast<int>(i) != id_col) out.covariate_names.push_back(t.header[i]);
  if (out.covariate_names.empty()) fail(path, "no covariate columns after point_id");
  if (t.rows.empty()) fail(path, "no support points");

  const int L = static_cast<int>(out.covariate_names.size());
  Eigen::MatrixXd points(static_cast<int>(t.rows.size()), L);
  std::vector<std::string> ids;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (static_cast<int>(row.size()) != L + 1)
      fail(path + " row " + std::to_string(r + 2), "expected " + std::to_string(L + 1) +
                                                      " cells, found " +
                                                      std::to_string(row.size()));
    ids.push_back(row[id_col]);
    int j = 0;
    for (size_t c = 0; c < row.size(); ++c) {
      if (static_cast<int>(c) == id_col) continue;
      points(static_cast<int>(r), j++) =
          parse_double(row[c], path + " row " + std::to_string(r + 2));
    }
  }
  out.support = CovariateSupport::from_points(points, std::move(ids));
  return out;
}

int SupportFile::covariate_index(const std::string& token) const {
  const std::string t = lower(trim(token));
  for (size_t i = 0; i < covariate_names.size(); ++i)
    if (covariate_names[i] == t) return static_cast<int>(i);
  // fall back to a 0-based numeric index
  int idx = -1;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), idx);
  if (ec == std::errc() && p == t.data() + t.size() && idx >= 0 &&
      idx < static_cast<int>(covariate_names.size()))
    return idx;
  return -1;
}

AggregateDataset read_dataset_csv(const std::string& support_path,
                                  const std::string& groups_path,
                                  const std::string& marginals_path,
                                  const std::string& finer_path, OutcomeRange range,
                                  bool binary_outcome) {
  SupportFile sf = read_support_csv(support_path);

  AggregateDataset ds;
  ds.support = sf.support;
  ds.range = range;
  ds.binary_outcome = binary_outcome;

  CsvTable gt = read_csv(groups_path);
  const int g_id = gt.require_column("group_id");
  const int g_count = gt.require_column("count");
  const int g_mean = gt.require_column("y_mean");
  const int g_se = gt.column("y_se");
  long long total = 0;
  for (size_t r = 0; r < gt.rows.size(); ++r) {
    const auto& row = gt.rows[r];
    const std::string where = groups_path + " row " + std::to_string(r + 2);
    if (blank(row, g_id)) fail(where, "empty group_id");
    GroupRecord rec;
    rec.id = row[g_id];
    if (ds.group_index(rec.id) >= 0) fail(where, "duplicate group '" + rec.id + "'");
    rec.count = parse_count(row[g_count], where);
    rec.y_mean = parse_double(row[g_mean], where);
    if (!blank(row, g_se)) rec.y_se = parse_double(row[g_se], where);
    rec.marginals = Eigen::VectorXd::Zero(ds.support.marginal_dim());
    total += *rec.count;
    ds.groups.push_back(std::move(rec));
  }
  if (ds.groups.empty()) fail(groups_path, "no groups");
  if (total <= 0) fail(groups_path, "counts sum to zero");
  for (auto& g : ds.groups)
    g.share = static_cast<double>(*g.count) / static_cast<double>(total);

  CsvTable mt = read_csv(marginals_path);
  const int m_id = mt.require_column("group_id");
  const int m_cov = mt.require_column("covariate");
  const int m_val = mt.require_column("value");
  const int m_prob = mt.require_column("prob");
  for (size_t r = 0; r < mt.rows.size(); ++r) {
    const auto& row = mt.rows[r];
    const std::string where = marginals_path + " row " + std::to_string(r + 2);
    const int gi = blank(row, m_id) ? -1 : ds.group_index(row[m_id]);
    if (gi < 0) fail(where, "unknown group '" + (blank(row, m_id) ? "" : row[m_id]) + "'");
    const int cov = sf.covariate_index(row[m_cov]);
    if (cov < 0)
      fail("group " + row[m_id] + ", " + where,
           "unknown covariate '" + row[m_cov] + "'");
    const double value = parse_double(row[m_val], where);
    const int vi = ds.support.value_index(cov, value);
    if (vi < 0)
      fail("group " + row[m_id] + ", covariate " + sf.covariate_names[cov] + ", " + where,
           "value " + row[m_val] + " is not in the support");
    ds.groups[gi].marginals(ds.support.marginal_row(cov, vi)) = parse_double(row[m_prob], where);
  }

  if (!finer_path.empty()) {
    CsvTable ft = read_csv(finer_path);
    const int f_id = ft.require_column("group_id");
    const int f_cov = ft.require_column("covariate");
    const int f_val = ft.require_column("value");
    const int f_mean = ft.require_column("y_mean");
    const int f_se = ft.column("y_se");
    const int f_count = ft.column("count");
    for (size_t r = 0; r < ft.rows.size(); ++r) {
      const auto& row = ft.rows[r];
      const std::string where = finer_path + " row " + std::to_string(r + 2);
      const int gi = blank(row, f_id) ? -1 : ds.group_index(row[f_id]);
      if (gi < 0) fail(where, "unknown group '" + (blank(row, f_id) ? "" : row[f_id]) + "'");
      const int cov = sf.covariate_index(row[f_cov]);
      if (cov < 0)
        fail("group " + row[f_id] + ", " + where, "unknown covariate '" + row[f_cov] + "'");
      FinerMoment fm;
      fm.covariate = cov;
      fm.value = parse_double(row[f_val], where);
      if (ds.support.value_index(cov, fm.value) < 0)
        fail("group " + row[f_id] + ", covariate " + sf.covariate_names[cov] + ", " + where,
             "value " + row[f_val] + " is not in the support");
      fm.y_mean = parse_double(row[f_mean], where);
      if (!blank(row, f_se)) fm.y_se = parse_double(row[f_se], where);
      if (!blank(row, f_count)) fm.count = parse_count(row[f_count], where);
      ds.groups[gi].finer.push_back(std::move(fm));
    }
  }
  return ds;
}

json dataset_to_json(const AggregateDataset& ds) {
  json support;
  support["point_ids"] = ds.support.point_ids();
  json pts = json::array();
  for (int k = 0; k < ds.support.num_points(); ++k) {
    json row = json::array();
    for (int l = 0; l < ds.support.num_covariates(); ++l) row.push_back(ds.support.points()(k, l));
    pts.push_back(std::move(row));
  }
  support["points"] = std::move(pts);

  json groups = json::array();
  for (const auto& g : ds.groups) {
    json jg;
    jg["id"] = g.id;
    jg["share"] = g.share;
    if (g.count) jg["count"] = *g.count;
    jg["y_mean"] = g.y_mean;
    if (g.y_se) jg["y_se"] = *g.y_se;
    jg["marginals"] = std::vector<double>(g.marginals.data(), g.marginals.data() + g.marginals.size());
    if (!g.finer.empty()) {
      json jf = json::array();
      for (const auto& f : g.finer) {
        json je;
        je["covariate"] = f.covariate;
        je["value"] = f.value;
        je["y_mean"] = f.y_mean;
        if (f.y_se) je["y_se"] = *f.y_se;
        if (f.count) je["count"] = *f.count;
        jf.push_back(std::move(je));
      }
      jg["finer"] = std::move(jf);
    }
    groups.push_back(std::move(jg));
  }

  return json{{"support", std::move(support)},
              {"range", {{"lo", ds.range.lo}, {"hi", ds.range.hi}}},
              {"binary_outcome", ds.binary_outcome},
              {"groups", std::move(groups)}};
}

AggregateDataset dataset_from_json(const json& j) {
  try {
    AggregateDataset ds;
    const auto& js = j.at("support");
    const auto& pts = js.at("points");
    const int K = static_cast<int>(pts.size());
    if (K == 0) fail("dataset json", "support has no points");
    const int L = static_cast<int>(pts.at(0).size());
    Eigen::MatrixXd points(K, L);
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < L; ++l) points(k, l) = pts.at(k).at(l).get<double>();
    std::vector<std::string> ids;
    if (js.contains("point_ids")) ids = js.at("point_ids").get<std::vector<std::string>>();
    ds.support = CovariateSupport::from_points(points, std::move(ids));

    ds.range.lo = j.at("range").at("lo").get<double>();
    ds.range.hi = j.at("range").at("hi").get<double>();
    ds.binary_outcome = j.value("binary_outcome", false);

    for (const auto& jg : j.at("groups")) {
      GroupRecord g;
      g.id = jg.at("id").get<std::string>();
      g.share = jg.at("share").get<double>();
      if (jg.contains("count")) g.count = jg.at("count").get<long long>();
      g.y_mean = jg.at("y_mean").get<double>();
      if (jg.contains("y_se")) g.y_se = jg.at("y_se").get<double>();
      const auto m = jg.at("marginals").get<std::vector<double>>();
      if (static_cast<int>(m.size()) != ds.support.marginal_dim())
        fail("group " + g.id, "marginal vector has wrong length");
      g.marginals = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
      if (jg.contains("finer")) {
        for (const auto& je : jg.at("finer")) {
          FinerMoment f;
          f.covariate = je.at("covariate").get<int>();
          f.value = je.at("value").get<double>();
          f.y_mean = je.at("y_mean").get<double>();
          if (je.contains("y_se")) f.y_se = je.at("y_se").get<double>();
          if (je.contains("count")) f.count = je.at("count").get<long long>();
          g.finer.push_back(std::move(f));
        }
      }
      ds.groups.push_back(std::move(g));
    }
    return ds;
  } catch (const json::exception& e) {
    fail("dataset json", e.what());
  }
}

json spec_to_json(const sim::JointSpec& spec) {
  json js;
  json pts = json::array();
  for (int k = 0; k < spec.support.num_points(); ++k) {
    json row = json::array();
    for (int l = 0; l < spec.support.num_covariates(); ++l)
      row.push_back(spec.support.points()(k, l));
    pts.push_back(std::move(row));
  }
  js["support"] = {{"points", std::move(pts)}, {"point_ids", spec.support.point_ids()}};
  js["range"] = {{"lo", spec.range.lo}, {"hi", spec.range.hi}};
  js["binary_outcome"] = spec.binary_outcome;
  js["group_ids"] = spec.group_ids;
  auto matrix = [](const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  js["joints"] = matrix(spec.joints);
  js["cond_means"] = matrix(spec.cond_means);
  js["shares"] = std::vector<double>(spec.shares.data(), spec.shares.data() + spec.shares.size());
  return js;
}

sim::JointSpec spec_from_json(const json& j) {
  try {
    sim::JointSpec spec;
    const auto& pts = j.at("support").at("points");
    const int K = static_cast<int>(pts.size());
    const int L = static_cast<int>(pts.at(0).size());
    Eigen::MatrixXd points(K, L);
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < L; ++l) points(k, l) = pts.at(k).at(l).get<double>();
    std::vector<std::string> ids;
    if (j.at("support").contains("point_ids"))
      ids = j.at("support").at("point_ids").get<std::vector<std::string>>();
    spec.support = CovariateSupport::from_points(points, std::move(ids));
    spec.range.lo = j.at("range").at("lo").get<double>();
    spec.range.hi = j.at("range").at("hi").get<double>();
    spec.binary_outcome = j.value("binary_outcome", false);
    spec.group_ids = j.at("group_ids").get<std::vector<std::string>>();
    const int G = static_cast<int>(spec.group_ids.size());
    auto matrix = [&](const json& rows, int cols) {
      Eigen::MatrixXd m(static_cast<int>(rows.size()), cols);
      for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rows.at(r).at(c).get<double>();
      return m;
    };
    spec.joints = matrix(j.at("joints"), K);
    spec.cond_means = matrix(j.at("cond_means"), K);
    const auto s = j.at("shares").get<std::vector<double>>();
    if (static_cast<int>(s.size()) != G) fail("spec json", "shares length mismatch");
    spec.shares = Eigen::Map<const Eigen::VectorXd>(s.data(), s.size());
    spec.check();
    return spec;
  } catch (const json::exception& e) {
    fail("spec json", e.what());
  }
}

std::string format_double(double v) {
  char buf[40];
  // %.17g is always round-trip exact; try the shorter %.15g first
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back != v) std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

json witness_to_json(const Witness& w) {
  return json{{"p", std::vector<double>(w.p.data(), w.p.data() + w.p.size())},
              {"c", std::vector<double>(w.c.data(), w.c.data() + w.c.size())}};
}

}  // namespace

json bounds_to_json(const BoundResult& result, bool include_witnesses) {
  json groups = json::array();
  for (const auto& g : result.groups) {
    json jg{{"group", g.group}, {"lower", g.lower}, {"upper", g.upper}};
    if (include_witnesses) {
      jg["lower_witness"] = witness_to_json(g.lower_witness);
      jg["upper_witness"] = witness_to_json(g.upper_witness);
    }
    groups.push_back(std::move(jg));
  }
  return json{{"groups", std::move(groups)},
              {"aggregate",
               {{"lower", result.aggregate.lower}, {"upper", result.aggregate.upper}}}};
}

std::string bounds_to_csv(const BoundResult& result) {
  std::ostringstream out;
  out << "group,lower,upper\n";
  for (const auto& g : result.groups)
    out << g.group << ',' << format_double(g.lower) << ',' << format_double(g.upper) << '\n';
  out << "aggregate," << format_double(result.aggregate.lower) << ','
      << format_double(result.aggregate.upper) << '\n';
  return out.str();
}

json confidence_to_json(const inference::ConfidenceReport& rep) {
  json intervals = json::array();
  for (const auto& iv : rep.intervals) {
    json ji{{"kind", iv.kind},
            {"group", iv.group},
            {"estimate", iv.estimate},
            {"lower", iv.ci.lower},
            {"upper", iv.ci.upper},
            {"method", iv.method}};
    if (iv.covariate >= 0) {
      ji["covariate"] = iv.covariate;
      ji["value"] = iv.value;
    }
    intervals.push_back(std::move(ji));
  }
  json per_group = json::array();
  for (const auto& g : rep.per_group)
    per_group.push_back(json{{"group", g.group}, {"lower", g.lower}, {"upper", g.upper}});
  return json{
      {"alpha", rep.alpha},
      {"num_intervals", rep.M},
      {"level_each", rep.level_each},
      {"intervals", std::move(intervals)},
      {"per_group", std::move(per_group)},
      {"d_ci", {{"lower", rep.d_ci.lower}, {"upper", rep.d_ci.upper}}},
      {"point", bounds_to_json(rep.point, false)}};
}

std::string intervals_to_csv(const std::vector<inference::MarginalInterval>& intervals) {
  std::ostringstream out;
  out << "kind,group,covariate,value,estimate,lower,upper,method\n";
  for (const auto& iv : intervals) {
    out << iv.kind << ',' << iv.group << ',';
    if (iv.covariate >= 0)
      out << iv.covariate << ',' << format_double(iv.value);
    else
      out << ',';
    out << ',' << format_double(iv.estimate) << ',' << format_double(iv.ci.lower) << ','
        << format_double(iv.ci.upper) << ',' << iv.method << '\n';
  }
  return out.str();
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(path, e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(path, "cannot open file for writing");
  out << j.dump(2) << '\n';
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(path, "cannot open file for writing");
  out << text;
}

}  // namespace aggbounds::io
