#include "aggbounds/cli.hpp"

#include "aggbounds/bounds.hpp"
#include "aggbounds/frechet.hpp"
#include "aggbounds/inference.hpp"
#include "aggbounds/io.hpp"
#include "aggbounds/simlab.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>

namespace aggbounds::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string data_path;  // dataset as JSON; alternative to the CSV trio
  std::string support_path, groups_path, marginals_path, finer_path;
  std::vector<double> lambda;
  std::string contrast;
  std::string range_str = "0:1";
  bool binary = false;
  bool renormalize = false;
  double alpha = 0.05;
  std::uint64_t seed = SearchOptions{}.seed;
  int starts = SearchOptions{}.n_random_starts;
  int iters = SearchOptions{}.max_iters_per_start;
  std::vector<std::string> monotone;  // COV:inc | COV:dec
  bool use_finer = false;
  bool witnesses = false;
  std::string out_dir;
  std::string format;  // "", "csv", "json"
};

struct LoadedData {
  AggregateDataset ds;
  std::vector<std::string> covariate_names;  // empty when loaded from JSON
};

[[noreturn]] void bad_input(const std::string& message) {
  throw ValidationError({{"command line", message}});
}

OutcomeRange parse_range(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) bad_input("--range expects LO:HI, got '" + s + "'");
  try {
    OutcomeRange r{std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
    if (!(r.lo < r.hi)) bad_input("--range needs LO < HI, got '" + s + "'");
    return r;
  } catch (const std::logic_error&) {
    bad_input("--range expects numbers, got '" + s + "'");
  }
}

int resolve_covariate(const std::string& token, const std::vector<std::string>& names,
                      int num_covariates) {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == token) return static_cast<int>(i);
  try {
    size_t pos = 0;
    const int idx = std::stoi(token, &pos);
    if (pos == token.size() && idx >= 0 && idx < num_covariates) return idx;
  } catch (const std::logic_error&) {
  }
  bad_input("unknown covariate '" + token + "'");
}

// "cell(a) - cell(b)" with optional numeric coefficients ("0.5*cell(...)").
// cell(...) takes either one support-point id or a full covariate tuple.
Eigen::VectorXd parse_contrast(const std::string& expr, const CovariateSupport& support) {
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(support.num_points());
  size_t i = 0;
  const auto skip_ws = [&] {
    while (i < expr.size() && std::isspace(static_cast<unsigned char>(expr[i]))) ++i;
  };
  bool first = true;
  while (skip_ws(), i < expr.size()) {
    double sign = 1.0;
    if (expr[i] == '+' || expr[i] == '-') {
      sign = expr[i] == '-' ? -1.0 : 1.0;
      ++i;
      skip_ws();
    } else if (!first) {
      bad_input("contrast: expected '+' or '-' near '" + expr.substr(i) + "'");
    }
    first = false;

    double coef = 1.0;
    const size_t term_start = i;
    if (i < expr.size() && (std::isdigit(static_cast<unsigned char>(expr[i])) || expr[i] == '.')) {
      size_t pos = 0;
      coef = std::stod(expr.substr(i), &pos);
      i += pos;
      skip_ws();
      if (i >= expr.size() || expr[i] != '*')
        bad_input("contrast: expected '*' after coefficient in '" + expr.substr(term_start) + "'");
      ++i;
      skip_ws();
    }
    if (expr.compare(i, 5, "cell(") != 0)
      bad_input("contrast: expected cell(...) near '" + expr.substr(i) + "'");
    i += 5;
    const size_t close = expr.find(')', i);
    if (close == std::string::npos) bad_input("contrast: missing ')'");
    std::string args = expr.substr(i, close - i);
    i = close + 1;

    // try a full numeric tuple first, then a point id
    std::vector<double> vals;
    bool numeric = true;
    std::stringstream ss(args);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        size_t pos = 0;
        vals.push_back(std::stod(tok, &pos));
        while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
        if (pos != tok.size()) numeric = false;
      } catch (const std::logic_error&) {
        numeric = false;
      }
      if (!numeric) break;
    }
    int cell = -1;
    if (numeric && static_cast<int>(vals.size()) == support.num_covariates()) {
      Eigen::RowVectorXd x = Eigen::Map<Eigen::RowVectorXd>(vals.data(), vals.size());
      if (support.has_point(x)) cell = support.flat_index(x);
    }
    if (cell < 0) {
      const std::string id = [&] {
        std::string t = args;
        t.erase(0, t.find_first_not_of(" \t"));
        t.erase(t.find_last_not_of(" \t") + 1);
        return t;
      }();
      const auto& ids = support.point_ids();
      for (size_t k = 0; k < ids.size(); ++k)
        if (ids[k] == id) {
          cell = static_cast<int>(k);
          break;
        }
    }
    if (cell < 0) bad_input("contrast: cell(" + args + ") names no support point");
    lambda(cell) += sign * coef;
  }
  if (lambda.isZero(0.0)) bad_input("contrast: no terms");
  return lambda;
}

Eigen::VectorXd resolve_lambda(const CommonOpts& opts, const CovariateSupport& support) {
  if (!opts.lambda.empty() && !opts.contrast.empty())
    bad_input("give --lambda or --contrast, not both");
  if (!opts.contrast.empty()) return parse_contrast(opts.contrast, support);
  if (!opts.lambda.empty()) {
    if (static_cast<int>(opts.lambda.size()) != support.num_points())
      bad_input("--lambda needs " + std::to_string(support.num_points()) +
                " entries (one per support point), got " + std::to_string(opts.lambda.size()));
    return Eigen::Map<const Eigen::VectorXd>(opts.lambda.data(), opts.lambda.size());
  }
  bad_input("give --lambda or --contrast");
}

ShapeConstraintSet build_shape(const CommonOpts& opts, const json* config,
                               const LoadedData& data) {
  ShapeConstraintSet shape;
  const auto& support = data.ds.support;
  for (const auto& spec : opts.monotone) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) bad_input("--monotone expects COV:inc or COV:dec");
    const int cov = resolve_covariate(spec.substr(0, colon), data.covariate_names,
                                      support.num_covariates());
    const std::string dir = spec.substr(colon + 1);
    Monotone m;
    if (dir == "inc" || dir == "increasing")
      m = Monotone::increasing;
    else if (dir == "dec" || dir == "decreasing")
      m = Monotone::decreasing;
    else
      bad_input("--monotone direction must be inc or dec, got '" + dir + "'");
    const ShapeConstraintSet rows = monotone_constraint(support, cov, m);
    auto [S, a] = rows.rows_for("");
    shape.append(S, a);
  }
  if (config && config->contains("shape")) {
    const json& js = config->at("shape");
    const auto& rows = js.at("S");
    const int K = support.num_points();
    Eigen::MatrixXd S(static_cast<int>(rows.size()), K);
    for (int r = 0; r < S.rows(); ++r) {
      if (static_cast<int>(rows.at(r).size()) != K)
        bad_input("config shape.S rows need " + std::to_string(K) + " entries");
      for (int k = 0; k < K; ++k) S(r, k) = rows.at(r).at(k).get<double>();
    }
    const auto a = js.at("a").get<std::vector<double>>();
    if (static_cast<int>(a.size()) != S.rows()) bad_input("config shape.a length mismatch");
    shape.append(S, Eigen::Map<const Eigen::VectorXd>(a.data(), a.size()));
  }
  return shape;
}

LoadedData load_dataset(const CommonOpts& opts) {
  LoadedData out;
  if (!opts.data_path.empty()) {
    if (!opts.support_path.empty() || !opts.groups_path.empty() || !opts.marginals_path.empty())
      bad_input("give --data or the CSV files, not both");
    out.ds = io::dataset_from_json(io::read_json_file(opts.data_path));
  } else {
    if (opts.support_path.empty() || opts.groups_path.empty() || opts.marginals_path.empty())
      bad_input("need --support, --groups, and --marginals (or --data)");
    io::SupportFile sf = io::read_support_csv(opts.support_path);
    out.covariate_names = sf.covariate_names;
    out.ds = io::read_dataset_csv(opts.support_path, opts.groups_path, opts.marginals_path,
                                  opts.finer_path, parse_range(opts.range_str), opts.binary);
  }
  ValidateOptions vo;
  vo.renormalize = opts.renormalize;
  validate_or_throw(out.ds, vo);
  return out;
}

SearchOptions search_options(const CommonOpts& opts) {
  SearchOptions s;
  s.n_random_starts = opts.starts;
  s.max_iters_per_start = opts.iters;
  s.seed = opts.seed;
  return s;
}

bool want_csv(const CommonOpts& opts) { return opts.format.empty() || opts.format == "csv"; }
bool want_json(const CommonOpts& opts) { return opts.format.empty() || opts.format == "json"; }

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) bad_input("cannot create output directory '" + dir + "': " + ec.message());
}

void emit(const CommonOpts& opts, const std::string& stem, const json& j,
          const std::string& csv) {
  if (opts.out_dir.empty()) {
    if (opts.format == "csv")
      std::cout << csv;
    else
      std::cout << j.dump(2) << '\n';
    return;
  }
  ensure_out_dir(opts.out_dir);
  const fs::path dir(opts.out_dir);
  if (want_json(opts)) io::write_json_file((dir / (stem + ".json")).string(), j);
  if (want_csv(opts) && !csv.empty()) io::write_text_file((dir / (stem + ".csv")).string(), csv);
}

std::string interval_str(const Interval& iv) {
  return "[" + io::format_double(iv.lower) + ", " + io::format_double(iv.upper) + "]";
}

// ---- subcommands ----------------------------------------------------------

int cmd_bounds(const CommonOpts& opts, const json* config) {
  LoadedData data = load_dataset(opts);
  const Eigen::VectorXd lambda = resolve_lambda(opts, data.ds.support);
  const ShapeConstraintSet shape = build_shape(opts, config, data);

  BoundResult result = identified_set(data.ds, lambda, shape.empty() ? nullptr : &shape,
                                      opts.use_finer, search_options(opts));

  json j = io::bounds_to_json(result, opts.witnesses);
  j["lambda"] = std::vector<double>(lambda.data(), lambda.data() + lambda.size());
  emit(opts, "bounds", j, io::bounds_to_csv(result));
  if (!opts.out_dir.empty()) {
    io::write_json_file((fs::path(opts.out_dir) / "dataset.json").string(),
                        io::dataset_to_json(data.ds));
    std::cout << "wrote " << opts.out_dir << "\n";
  }
  std::cerr << "aggregate D = " << interval_str(result.aggregate) << "\n";
  return 0;
}

int cmd_frechet(const CommonOpts& opts, const json* config) {
  LoadedData data = load_dataset(opts);
  if (!data.ds.binary_outcome)
    bad_input("frechet bounds need a binary outcome (--binary with range 0:1)");
  const Eigen::VectorXd lambda = resolve_lambda(opts, data.ds.support);
  if (!opts.monotone.empty() || opts.use_finer || (config && config->contains("shape")))
    std::cerr << "note: shape and finer restrictions are ignored here; these bounds "
                 "contain the optimization bounds\n";

  BoundResult result;
  for (const auto& g : data.ds.groups) {
    const Interval gi = frechet::group_frechet_interval(g, data.ds.support, lambda);
    result.groups.push_back({g.id, gi.lower, gi.upper, {}, {}});
  }
  result.aggregate = frechet::frechet_identified_set(data.ds, lambda);

  emit(opts, "frechet", io::bounds_to_json(result, false), io::bounds_to_csv(result));
  std::cerr << "aggregate D_F = " << interval_str(result.aggregate) << "\n";
  return 0;
}

int cmd_ci(const CommonOpts& opts, const json* config) {
  LoadedData data = load_dataset(opts);
  const Eigen::VectorXd lambda = resolve_lambda(opts, data.ds.support);
  const ShapeConstraintSet shape = build_shape(opts, config, data);

  auto report = inference::ci_identified_set(data.ds, lambda, opts.alpha,
                                             shape.empty() ? nullptr : &shape, opts.use_finer,
                                             search_options(opts));

  const json j = io::confidence_to_json(report);
  const std::string csv = io::intervals_to_csv(report.intervals);
  if (opts.out_dir.empty()) {
    if (opts.format == "csv")
      std::cout << csv;
    else
      std::cout << j.dump(2) << '\n';
  } else {
    ensure_out_dir(opts.out_dir);
    if (want_json(opts)) io::write_json_file((fs::path(opts.out_dir) / "ci.json").string(), j);
    if (want_csv(opts))
      io::write_text_file((fs::path(opts.out_dir) / "intervals.csv").string(), csv);
    std::cout << "wrote " << opts.out_dir << "\n";
  }
  std::cerr << "point D = " << interval_str(report.point.aggregate)
            << "  ci D = " << interval_str(report.d_ci) << "  (" << report.M
            << " intervals at level " << io::format_double(report.level_each) << ")\n";
  return 0;
}

int cmd_simulate(const CommonOpts& opts, const json* config, int preset,
                 const std::string& spec_path, int reps, long long n_per_group) {
  sim::JointSpec spec;
  if (!spec_path.empty())
    spec = io::spec_from_json(io::read_json_file(spec_path));
  else if (preset >= 1)
    spec = sim::exercise_preset(preset);
  else
    bad_input("need --preset 1|2|3 or --spec FILE");

  Eigen::VectorXd lambda;
  if (!opts.lambda.empty() || !opts.contrast.empty()) {
    lambda = resolve_lambda(opts, spec.support);
  } else {
    // default target: mean over the cells at the first covariate's high value
    // minus mean over the cells at its low value
    lambda = Eigen::VectorXd::Zero(spec.support.num_points());
    const auto& vals = spec.support.values(0);
    int n_hi = 0, n_lo = 0;
    for (int k = 0; k < spec.support.num_points(); ++k) {
      if (spec.support.points()(k, 0) == vals.back()) ++n_hi;
      if (spec.support.points()(k, 0) == vals.front()) ++n_lo;
    }
    for (int k = 0; k < spec.support.num_points(); ++k) {
      if (spec.support.points()(k, 0) == vals.back()) lambda(k) = 1.0 / n_hi;
      if (spec.support.points()(k, 0) == vals.front()) lambda(k) = -1.0 / n_lo;
    }
  }

  sim::CoverageOptions copts;
  copts.reps = reps;
  copts.n_per_group = n_per_group;
  copts.alpha = opts.alpha;
  copts.seed = opts.seed;
  copts.use_finer = opts.use_finer;
  copts.search = search_options(opts);
  LoadedData pseudo;  // shape builders need covariate names / support only
  pseudo.ds.support = spec.support;
  const ShapeConstraintSet shape = build_shape(opts, config, pseudo);
  copts.shape = shape.empty() ? nullptr : &shape;

  const sim::CoverageResult res = sim::coverage_study(spec, lambda, copts);

  std::ostringstream csv;
  csv << "rep,point_lower,point_upper,ci_lower,ci_upper,covered,max_err\n";
  for (int r = 0; r < res.reps; ++r)
    csv << r << ',' << io::format_double(res.rep_point[r].lower) << ','
        << io::format_double(res.rep_point[r].upper) << ','
        << io::format_double(res.rep_ci[r].lower) << ','
        << io::format_double(res.rep_ci[r].upper) << ',' << (res.covered[r] ? 1 : 0) << ','
        << io::format_double(res.rep_max_err[r]) << '\n';

  json j{{"population", {{"lower", res.population.lower}, {"upper", res.population.upper}}},
         {"reps", res.reps},
         {"n_per_group", n_per_group},
         {"alpha", opts.alpha},
         {"seed", opts.seed},
         {"coverage_rate", res.coverage_rate},
         {"max_err_lower", res.max_err_lower},
         {"max_err_upper", res.max_err_upper},
         {"lambda", std::vector<double>(lambda.data(), lambda.data() + lambda.size())}};

  if (opts.out_dir.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    ensure_out_dir(opts.out_dir);
    io::write_json_file((fs::path(opts.out_dir) / "summary.json").string(), j);
    io::write_text_file((fs::path(opts.out_dir) / "reps.csv").string(), csv.str());
    std::cout << "wrote " << opts.out_dir << "\n";
  }
  std::cerr << "population D = " << interval_str(res.population) << "  coverage "
            << io::format_double(res.coverage_rate) << " over " << res.reps << " reps\n";
  return 0;
}

int cmd_oracle(const CommonOpts& opts, const json* config, double grid_step) {
  LoadedData data = load_dataset(opts);
  const Eigen::VectorXd lambda = resolve_lambda(opts, data.ds.support);
  const ShapeConstraintSet shape = build_shape(opts, config, data);
  const ShapeConstraintSet* sp = shape.empty() ? nullptr : &shape;
  const SearchOptions sopts = search_options(opts);

  // invalid_argument from the oracle (K or d too large) surfaces as exit 2
  json rows = json::array();
  std::ostringstream csv;
  csv << "group,search_lower,search_upper,oracle_lower,oracle_upper,"
         "l_range_lower,l_range_upper,u_range_lower,u_range_upper\n";
  try {
    for (size_t gi = 0; gi < data.ds.groups.size(); ++gi) {
      const auto& g = data.ds.groups[gi];
      SearchOptions gopts = sopts;
      gopts.seed = mix_seed(sopts.seed, static_cast<std::uint64_t>(gi));
      const GroupBounds gb =
          group_bounds(g, data.ds.support, lambda, data.ds.range, sp, opts.use_finer, gopts);
      const sim::OracleRanges oracle = sim::brute_force_ranges(
          g, data.ds.support, lambda, data.ds.range, grid_step, sp, opts.use_finer);
      const JointKnownRange jk =
          joint_known_range(g, data.ds.support, lambda, data.ds.range, gopts);

      rows.push_back(json{{"group", g.id},
                          {"search", {{"lower", gb.lower}, {"upper", gb.upper}}},
                          {"oracle",
                           {{"lower", oracle.bounds.lower}, {"upper", oracle.bounds.upper}}},
                          {"l_range",
                           {{"lower", jk.L_range.lower}, {"upper", jk.L_range.upper}}},
                          {"u_range",
                           {{"lower", jk.U_range.lower}, {"upper", jk.U_range.upper}}}});
      csv << g.id << ',' << io::format_double(gb.lower) << ',' << io::format_double(gb.upper)
          << ',' << io::format_double(oracle.bounds.lower) << ','
          << io::format_double(oracle.bounds.upper) << ','
          << io::format_double(jk.L_range.lower) << ',' << io::format_double(jk.L_range.upper)
          << ',' << io::format_double(jk.U_range.lower) << ','
          << io::format_double(jk.U_range.upper) << '\n';
    }
  } catch (const std::invalid_argument& e) {
    bad_input(e.what());
  }

  emit(opts, "oracle", json{{"grid_step", grid_step}, {"groups", std::move(rows)}}, csv.str());
  return 0;
}

void add_common(CLI::App* sub, CommonOpts& o, bool with_inputs = true) {
  sub->add_option("--config", o.config_path, "JSON config; flags override its keys");
  if (with_inputs) {
    sub->add_option("--data", o.data_path, "dataset as JSON (alternative to the CSV files)");
    sub->add_option("--support", o.support_path, "support.csv: point_id + covariate columns");
    sub->add_option("--groups", o.groups_path, "groups.csv: group_id,count,y_mean[,y_se]");
    sub->add_option("--marginals", o.marginals_path,
                    "marginals.csv: group_id,covariate,value,prob");
    sub->add_option("--finer", o.finer_path,
                    "finer.csv: group_id,covariate,value,y_mean[,y_se][,count]");
    sub->add_option("--range", o.range_str, "outcome range LO:HI (default 0:1)");
    sub->add_flag("--binary", o.binary, "outcome is binary (requires range 0:1)");
    sub->add_flag("--renormalize", o.renormalize,
                  "rescale marginal/share sums within 1e-6 of one");
  }
  sub->add_option("--lambda", o.lambda, "weights, one per support cell")->delimiter(',');
  sub->add_option("--contrast", o.contrast, "expression like \"cell(a) - cell(b)\"");
  sub->add_option("--alpha", o.alpha, "size for confidence statements");
  sub->add_option("--seed", o.seed, "search seed");
  sub->add_option("--starts", o.starts, "random outer-search starts per group");
  sub->add_option("--iters", o.iters, "simplex-search iterations per start");
  sub->add_option("--monotone", o.monotone, "COV:inc or COV:dec (repeatable)");
  sub->add_flag("--use-finer", o.use_finer, "impose the finer conditional means");
  sub->add_option("--out", o.out_dir, "output directory (default: print to stdout)");
  sub->add_option("--format", o.format, "csv or json (default: both)")
      ->check(CLI::IsMember({"csv", "json"}));
}

// config keys mirror the long flag names; values read only for flags not given
// on the command line
void merge_config(const json& cfg, CLI::App* sub, CommonOpts& o) {
  const auto unset = [&](const char* flag) {
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    return opt != nullptr && opt->count() == 0;
  };
  const auto get_str = [&](const char* flag, const char* key, std::string& var) {
    if (unset(flag) && cfg.contains(key)) var = cfg.at(key).get<std::string>();
  };
  get_str("--data", "data", o.data_path);
  get_str("--support", "support", o.support_path);
  get_str("--groups", "groups", o.groups_path);
  get_str("--marginals", "marginals", o.marginals_path);
  get_str("--finer", "finer", o.finer_path);
  get_str("--contrast", "contrast", o.contrast);
  get_str("--out", "out", o.out_dir);
  get_str("--format", "format", o.format);
  if (unset("--range") && cfg.contains("range")) {
    if (cfg.at("range").is_string())
      o.range_str = cfg.at("range").get<std::string>();
    else
      o.range_str = io::format_double(cfg.at("range").at("lo").get<double>()) + ":" +
                    io::format_double(cfg.at("range").at("hi").get<double>());
  }
  if (unset("--binary") && cfg.contains("binary")) o.binary = cfg.at("binary").get<bool>();
  if (unset("--renormalize") && cfg.contains("renormalize"))
    o.renormalize = cfg.at("renormalize").get<bool>();
  if (unset("--lambda") && cfg.contains("lambda"))
    o.lambda = cfg.at("lambda").get<std::vector<double>>();
  if (unset("--alpha") && cfg.contains("alpha")) o.alpha = cfg.at("alpha").get<double>();
  if (unset("--seed") && cfg.contains("seed")) o.seed = cfg.at("seed").get<std::uint64_t>();
  if (unset("--starts") && cfg.contains("starts")) o.starts = cfg.at("starts").get<int>();
  if (unset("--iters") && cfg.contains("iters")) o.iters = cfg.at("iters").get<int>();
  if (unset("--monotone") && cfg.contains("monotone"))
    o.monotone = cfg.at("monotone").get<std::vector<std::string>>();
  if (unset("--use-finer") && cfg.contains("use_finer"))
    o.use_finer = cfg.at("use_finer").get<bool>();
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"sharp bounds on linear combinations of conditional means "
               "from group-level aggregates"};
  app.require_subcommand(1);

  CommonOpts bounds_o, frechet_o, ci_o, sim_o, oracle_o;
  int preset = 0, reps = 100;
  long long n_per_group = 1300;
  std::string spec_path;
  double grid_step = 0.01;

  CLI::App* c_bounds = app.add_subcommand("bounds", "identified set for the target");
  add_common(c_bounds, bounds_o);
  c_bounds->add_flag("--witnesses", bounds_o.witnesses, "include witness joints in the JSON");

  CLI::App* c_frechet = app.add_subcommand(
      "frechet", "closed-form outer bounds for binary outcomes");
  add_common(c_frechet, frechet_o);

  CLI::App* c_ci = app.add_subcommand("ci", "confidence set for the identified set");
  add_common(c_ci, ci_o);

  CLI::App* c_sim = app.add_subcommand("simulate", "coverage study on a known population");
  add_common(c_sim, sim_o, /*with_inputs=*/false);
  c_sim->add_option("--preset", preset, "stock design 1, 2, or 3");
  c_sim->add_option("--spec", spec_path, "population spec as JSON");
  c_sim->add_option("--reps", reps, "Monte Carlo repetitions");
  c_sim->add_option("--n", n_per_group, "observations per group");

  CLI::App* c_oracle = app.add_subcommand(
      "oracle", "search bounds vs. exhaustive-grid oracle (small instances)");
  add_common(c_oracle, oracle_o);
  c_oracle->add_option("--grid", grid_step, "oracle grid step");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());  // CLI11's convention
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    CommonOpts* o = nullptr;
    if (sub == c_bounds) o = &bounds_o;
    if (sub == c_frechet) o = &frechet_o;
    if (sub == c_ci) o = &ci_o;
    if (sub == c_sim) o = &sim_o;
    if (sub == c_oracle) o = &oracle_o;

    json config;
    const json* cfg = nullptr;
    if (!o->config_path.empty()) {
      config = io::read_json_file(o->config_path);
      merge_config(config, sub, *o);
      cfg = &config;
      if (sub == c_sim) {
        if (sub->get_option("--preset")->count() == 0 && config.contains("preset"))
          preset = config.at("preset").get<int>();
        if (sub->get_option("--spec")->count() == 0 && config.contains("spec"))
          spec_path = config.at("spec").get<std::string>();
        if (sub->get_option("--reps")->count() == 0 && config.contains("reps"))
          reps = config.at("reps").get<int>();
        if (sub->get_option("--n")->count() == 0 && config.contains("n"))
          n_per_group = config.at("n").get<long long>();
      }
      if (sub == c_oracle && sub->get_option("--grid")->count() == 0 &&
          config.contains("grid"))
        grid_step = config.at("grid").get<double>();
    }

    if (sub == c_bounds) return cmd_bounds(*o, cfg);
    if (sub == c_frechet) return cmd_frechet(*o, cfg);
    if (sub == c_ci) return cmd_ci(*o, cfg);
    if (sub == c_sim) return cmd_simulate(*o, cfg, preset, spec_path, reps, n_per_group);
    if (sub == c_oracle) return cmd_oracle(*o, cfg, grid_step);
    return 2;
  } catch (const ValidationError& e) {
    for (const auto& v : e.items()) std::cerr << "error: " << v.where << ": " << v.message << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace aggbounds::cli
