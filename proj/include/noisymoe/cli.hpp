#pragma once

// Command-line front end. Everything is reachable in-process through
// run_cli so the executable in tools/ is a one-line wrapper.

#include "noisymoe/io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace noisymoe {

/// 0 success, 2 usage, 3 data, 4 numeric failure.
inline int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::invalid_argument:
    case ErrorCode::invalid_config:
    case ErrorCode::unsupported_family:
      return 2;
    case ErrorCode::parse_error:
    case ErrorCode::schema_mismatch:
    case ErrorCode::model_version_mismatch:
    case ErrorCode::dimension_mismatch:
    case ErrorCode::too_few_points:
    case ErrorCode::empty_cell:
      return 3;
    case ErrorCode::degenerate_component:
    case ErrorCode::singular_design:
    case ErrorCode::too_large:
    case ErrorCode::non_finite:
    case ErrorCode::zero_denominator:
    case ErrorCode::degenerate:
      return 4;
  }
  return 4;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitOptions {
  std::string labeled;
  std::string unlabeled;
  /// "auto" or a positive integer.
  std::string k = "auto";
  Index k_max = 10;
  std::string method = "noisyss";
  double alpha = 0.5;
  /// Empty means the last column of the labeled file.
  std::string response;
  std::string gmm_pool = "all";
  std::optional<double> screen_radius;
  std::string out = "model.json";
  std::string report;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct FitOutcome {
  ModelDocument doc;
  json report;
};

namespace detail {

inline Index parse_k(const std::string& s) {
  Index k = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), k);
  require(ec == std::errc() && ptr == s.data() + s.size() && k >= 1, ErrorCode::invalid_config,
          "--k must be 'auto' or a positive integer, got '" + s + "'");
  return k;
}

/// Columns of `t` named in `names`, in that order.
inline Matrix select_columns(const CsvTable& t, const std::vector<std::string>& names, const std::string& what) {
  Matrix out(t.values.rows(), static_cast<Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    Index c = t.column(names[j]);
    require(c >= 0, ErrorCode::schema_mismatch, what + ": missing covariate column '" + names[j] + "'");
    out.col(static_cast<Index>(j)) = t.values.col(c);
  }
  return out;
}

inline json trace_json(const std::vector<double>& v) { return json(v); }

}  // namespace detail

/// The covariate pool used for the mixture fit and the BIC table.
inline Matrix gmm_pool_data(const Matrix& x_lab, const Matrix& x_unl, GmmPool pool) {
  if (pool == GmmPool::unlabeled_only) return x_unl;
  Matrix pooled(x_lab.rows() + x_unl.rows(), x_lab.cols());
  pooled << x_lab, x_unl;
  return pooled;
}

inline FitOutcome fit_tables(const CsvTable& labeled, const CsvTable* unlabeled, const FitOptions& opt) {
  const Method method = parse_method(opt.method);
  require(opt.gmm_pool == "all" || opt.gmm_pool == "unlabeled-only", ErrorCode::invalid_config,
          "--gmm-pool must be 'all' or 'unlabeled-only'");
  const GmmPool pool = opt.gmm_pool == "all" ? GmmPool::all : GmmPool::unlabeled_only;
  require(labeled.header.size() >= 2, ErrorCode::schema_mismatch, "labeled: need at least one covariate and a response");

  std::string response = opt.response.empty() ? labeled.header.back() : opt.response;
  Index ycol = labeled.column(response);
  require(ycol >= 0, ErrorCode::schema_mismatch, "labeled: no response column '" + response + "'");
  std::vector<std::string> covariates;
  for (const auto& h : labeled.header)
    if (h != response) covariates.push_back(h);

  Matrix x = detail::select_columns(labeled, covariates, "labeled");
  Vector y = labeled.values.col(ycol);
  Matrix xu(0, x.cols());
  if (unlabeled) {
    std::vector<std::string> uh;
    for (const auto& h : unlabeled->header)
      if (h != response) uh.push_back(h);
    require(uh == covariates, ErrorCode::schema_mismatch,
            "unlabeled covariate columns do not match the labeled covariates");
    xu = detail::select_columns(*unlabeled, covariates, "unlabeled");
  }
  require(pool == GmmPool::all || xu.rows() > 0, ErrorCode::invalid_config,
          "--gmm-pool unlabeled-only needs a non-empty unlabeled file");

  FitOutcome outcome;
  json& report = outcome.report;
  report["method"] = to_string(method);
  report["n_labeled"] = x.rows();
  report["n_unlabeled"] = xu.rows();
  report["covariates"] = covariates;
  report["response"] = response;

  GmmFitConfig gcfg;
  gcfg.seed = stream_seed(opt.seed, 0);
  gcfg.threads = opt.threads;

  Index k = 0;
  if (opt.k == "auto") {
    Matrix pooled = gmm_pool_data(x, xu, pool);
    std::vector<Index> cand;
    for (Index c = 1; c <= opt.k_max; ++c) cand.push_back(c);
    BicTable table = select_k_bic(pooled, cand, gcfg);
    json rows = json::array();
    for (const auto& r : table.rows) {
      json row{{"k", r.k}, {"n_params", r.n_params}};
      if (r.error.empty()) {
        row["bic"] = r.bic;
        row["log_likelihood"] = r.log_likelihood;
      } else {
        row["error"] = r.error;
      }
      rows.push_back(row);
    }
    report["bic_table"] = rows;
    report["bic_suggested_k"] = table.suggested_k;
    k = table.suggested_k;
  } else {
    k = detail::parse_k(opt.k);
  }
  gcfg.k = k;
  report["k"] = k;

  ModelDocument& doc = outcome.doc;
  doc.method = method;
  doc.covariates = covariates;
  doc.response = response;
  switch (method) {
    case Method::noisyss: {
      NoisyMoeConfig cfg;
      cfg.k = k;
      cfg.alpha = opt.alpha;
      cfg.gmm = gcfg;
      cfg.lts.seed = stream_seed(opt.seed, 1);
      cfg.lts.threads = opt.threads;
      cfg.pool = pool;
      cfg.screen_radius = opt.screen_radius;
      cfg.threads = opt.threads;
      NoisyMoeModel m = fit_noisy_moe(x, y, xu, cfg);
      const auto& d = m.diagnostics;
      std::vector<std::string> status;
      for (auto s : d.status) status.push_back(to_string(s));
      report["cluster_sizes"] = d.labeled_counts;
      report["retained_counts"] = d.retained_counts;
      report["cluster_status"] = status;
      report["lts_objective"] = d.lts_objective;
      report["eg_objective_trace"] = detail::trace_json(d.eg_trace);
      report["screened_out"] = d.screened_out;
      report["gmm_log_likelihood"] = m.gmm.log_likelihood;
      doc.model = std::move(m);
      break;
    }
    case Method::moess: {
      MoessModel m = fit_moess(x, y, xu, gcfg, pool);
      std::vector<std::string> status;
      for (auto s : m.status) status.push_back(to_string(s));
      report["cluster_sizes"] = m.labeled_counts;
      report["retained_counts"] = m.labeled_counts;
      report["cluster_status"] = status;
      report["gmm_log_likelihood"] = m.gmm.log_likelihood;
      doc.model = std::move(m);
      break;
    }
    case Method::moeline:
    case Method::moequad: {
      MoeEmConfig ec;
      ec.seed = stream_seed(opt.seed, 2);
      ec.threads = opt.threads;
      MoeFitResult r = fit_moe_em_traced(x, y, k, method == Method::moeline ? GateKind::linear : GateKind::quadratic, ec);
      json restarts = json::array();
      for (const auto& t : r.restarts) {
        json jr{{"log_likelihood_trace", detail::trace_json(t.log_likelihood)},
                {"converged", t.converged},
                {"sigma_floor_hits", t.sigma_floor_hits}};
        if (!t.error.empty()) jr["error"] = t.error;
        restarts.push_back(jr);
      }
      report["em_restarts"] = restarts;
      report["best_restart"] = r.best_restart;
      report["log_likelihood"] = r.model.log_likelihood;
      doc.model = std::move(r.model);
      break;
    }
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

inline Vector predict_table(const ModelDocument& doc, const CsvTable& x) {
  return predict(doc, detail::select_columns(x, doc.covariates, "x"));
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulatedData {
  Truth truth;
  SimSample labeled, unlabeled, test;
};

/// Same generator and stream layout as one benchmark replication.
inline SimulatedData simulate_data(const SimulationConfig& cfg) {
  cfg.validate();
  SimulatedData d;
  Rng truth_rng = make_rng(cfg.seed, 1);
  d.truth = make_truth(cfg, truth_rng);
  Rng lab = make_rng(cfg.seed, 2), unl = make_rng(cfg.seed, 3), test = make_rng(cfg.seed, 4);
  d.labeled = sample(d.truth, cfg.n_labeled, lab);
  d.unlabeled = sample(d.truth, cfg.n_unlabeled, unl);
  d.test = sample(d.truth, cfg.n_test, test);
  return d;
}

inline std::vector<std::string> covariate_names(Index p) {
  std::vector<std::string> names;
  for (Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

namespace detail {

inline void write_sample(const std::filesystem::path& path, const SimSample& s, bool with_y) {
  auto header = covariate_names(s.x.cols());
  if (with_y) {
    header.push_back("y");
    Matrix v(s.x.rows(), s.x.cols() + 1);
    v << s.x, s.y;
    write_csv_file(path.string(), header, v);
  } else {
    write_csv_file(path.string(), header, s.x);
  }
}

inline void write_latents(const std::filesystem::path& path, const SimSample& s) {
  Matrix v(static_cast<Index>(s.z.size()), 2);
  for (std::size_t i = 0; i < s.z.size(); ++i) {
    v(static_cast<Index>(i), 0) = static_cast<double>(s.z[i]);
    v(static_cast<Index>(i), 1) = static_cast<double>(s.tilde_z[i]);
  }
  write_csv_file(path.string(), {"z", "tilde_z"}, v);
}

}  // namespace detail

/// Writes labeled.csv, unlabeled.csv, test.csv and truth.json (the true model
/// as a noisyss document), plus *_latents.csv when asked.
inline SimulatedData write_simulation(const SimulationConfig& cfg, const std::string& dir, bool emit_latents) {
  namespace fs = std::filesystem;
  SimulatedData d = simulate_data(cfg);
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  require(!ec, ErrorCode::parse_error, "cannot create directory '" + dir + "'");
  detail::write_sample(root / "labeled.csv", d.labeled, true);
  detail::write_sample(root / "unlabeled.csv", d.unlabeled, false);
  detail::write_sample(root / "test.csv", d.test, true);
  if (emit_latents) {
    detail::write_latents(root / "labeled_latents.csv", d.labeled);
    detail::write_latents(root / "unlabeled_latents.csv", d.unlabeled);
    detail::write_latents(root / "test_latents.csv", d.test);
  }
  NoisyMoeModel truth;
  truth.gmm = d.truth.gmm;
  truth.experts = d.truth.experts;
  truth.transition = d.truth.transition;
  truth.alpha_used = 1.0;
  save_model((root / "truth.json").string(), ModelDocument{Method::noisyss, covariate_names(cfg.p), "y", truth});
  return d;
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> parse_values(const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const auto& s : items) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && ptr == s.data() + s.size(), ErrorCode::invalid_config,
            "--values: '" + s + "' is not a number");
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

/// Flags take precedence over --config file values, which take precedence
/// over NOISY_MOE_SEED for the seed.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Semi-supervised noisy mixture of experts"};
  app.name("noisymoe");
  app.set_config("--config", "", "TOML/INI file with option values; command-line flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  unsigned threads = default_threads();
  app.add_option("--seed", seed, "Base RNG seed")->envname("NOISY_MOE_SEED");
  app.add_option("--threads", threads, "Worker threads (1 = bitwise reproducible)")->check(CLI::PositiveNumber);

  // fit
  FitOptions fo;
  std::optional<double> screen_radius;
  auto* fit = app.add_subcommand("fit", "Fit a model from labeled and unlabeled CSV files");
  fit->add_option("labeled", fo.labeled, "Labeled CSV (covariates and response)")->required();
  fit->add_option("unlabeled", fo.unlabeled, "Unlabeled CSV (covariates only)");
  fit->add_option("--k", fo.k, "Number of components, or 'auto' for the BIC elbow")->capture_default_str();
  fit->add_option("--k-max", fo.k_max, "Largest k tried by --k auto")->capture_default_str()->check(CLI::PositiveNumber);
  fit->add_option("--method", fo.method, "noisyss | moess | moeline | moequad")
      ->capture_default_str()
      ->check(CLI::IsMember({"noisyss", "moess", "moeline", "moequad"}));
  fit->add_option("--alpha", fo.alpha, "Retaining fraction for LTS")->capture_default_str()->check(CLI::Range(0.5, 1.0));
  fit->add_option("--response", fo.response, "Response column (default: last column)");
  fit->add_option("--gmm-pool", fo.gmm_pool, "Covariates used for the mixture fit: all | unlabeled-only")
      ->capture_default_str()
      ->check(CLI::IsMember({"all", "unlabeled-only"}));
  fit->add_option("--screen-radius", screen_radius, "Drop labeled points with ||x|| above this radius");
  fit->add_option("--out", fo.out, "Model file")->capture_default_str();
  fit->add_option("--report", fo.report, "Fit report (JSON)");

  // predict
  std::string model_path, x_path, pred_out = "yhat.csv";
  auto* pred = app.add_subcommand("predict", "Predict the response for a covariate CSV");
  pred->add_option("model", model_path, "Model file")->required();
  pred->add_option("x", x_path, "Covariate CSV")->required();
  pred->add_option("--out", pred_out, "Output CSV with a single yhat column")->capture_default_str();

  // simulate
  SimulationConfig sim;
  std::string sim_dir = "sim";
  bool emit_latents = false;
  std::optional<double> sim_corruption;
  auto* simc = app.add_subcommand("simulate", "Generate data from the simulation design");
  simc->add_option("--out-dir", sim_dir, "Output directory")->capture_default_str();
  simc->add_option("--k", sim.k, "Components")->capture_default_str()->check(CLI::PositiveNumber);
  simc->add_option("--p", sim.p, "Covariate dimension")->capture_default_str()->check(CLI::PositiveNumber);
  simc->add_option("--n-labeled", sim.n_labeled, "Labeled sample size")->capture_default_str();
  simc->add_option("--n-unlabeled", sim.n_unlabeled, "Unlabeled sample size")->capture_default_str();
  simc->add_option("--n-test", sim.n_test, "Test sample size")->capture_default_str();
  simc->add_option("--p0", sim.p0, "Diagonal of the transition matrix")->capture_default_str();
  simc->add_option("--corruption", sim_corruption, "Corruption level in percent (overrides --p0)");
  simc->add_option("--sigma", sim.sigma, "Expert noise sd")->capture_default_str();
  simc->add_flag("--emit-latents", emit_latents, "Also write z and tilde_z per row");

  // bench
  BenchConfig bc;
  bc.threads = threads;
  std::string grid = "corruption", bench_out = "results.csv";
  std::vector<std::string> values, methods{"noisyss", "moess", "moeline", "moequad"};
  bool timing = false, finite_x = false;
  auto* bench = app.add_subcommand("bench", "Monte-Carlo benchmark over a grid of settings");
  bench->add_option("--grid", grid, "corruption | p0 | n")
      ->capture_default_str()
      ->check(CLI::IsMember({"corruption", "p0", "n"}));
  bench->add_option("--values", values, "Grid values (comma separated)")->delimiter(',');
  bench->add_option("--methods", methods, "Methods (comma separated)")->delimiter(',')->capture_default_str();
  bench->add_option("--reps", bc.reps, "Replications")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--k", bc.sim.k, "Components")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--p", bc.sim.p, "Covariate dimension")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--n-labeled", bc.sim.n_labeled, "Labeled sample size")->capture_default_str();
  bench->add_option("--n-unlabeled", bc.sim.n_unlabeled, "Unlabeled sample size (with --finite-x)")
      ->capture_default_str();
  bench->add_option("--n-test", bc.sim.n_test, "Test sample size")->capture_default_str();
  bench->add_option("--p0", bc.sim.p0, "Transition diagonal for the n grid")->capture_default_str();
  bench->add_option("--alpha", bc.alpha, "Retaining fraction for LTS")->capture_default_str()->check(CLI::Range(0.5, 1.0));
  bench->add_flag("--freeze-truth", bc.freeze_truth, "Draw the covariance rotations once for all replications");
  bench->add_flag("--finite-x", finite_x, "Fit the covariate mixture instead of using the true one");
  bench->add_flag("--timing", timing, "Add a seconds column to the CSV (not reproducible)");
  bench->add_option("--out", bench_out, "Per-replication CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*fit) {
      fo.seed = seed;
      fo.threads = threads;
      fo.screen_radius = screen_radius;
      CsvTable lab = read_csv_file(fo.labeled);
      std::optional<CsvTable> unl;
      if (!fo.unlabeled.empty()) unl = read_csv_file(fo.unlabeled);
      FitOutcome r = fit_tables(lab, unl ? &*unl : nullptr, fo);
      save_model(fo.out, r.doc);
      if (!fo.report.empty()) {
        std::ofstream rep(fo.report);
        require(static_cast<bool>(rep), ErrorCode::parse_error, "cannot write '" + fo.report + "'");
        rep << r.report.dump(2) << '\n';
      }
      out << "fitted " << r.report["method"].get<std::string>() << " with k = " << r.report["k"].get<Index>()
          << " on " << r.report["n_labeled"].get<Index>() << " labeled rows; model written to " << fo.out << '\n';
    } else if (*pred) {
      ModelDocument doc = load_model(model_path);
      Vector yhat = predict_table(doc, read_csv_file(x_path));
      write_csv_file(pred_out, {"yhat"}, yhat);
      out << yhat.size() << " predictions written to " << pred_out << '\n';
    } else if (*simc) {
      sim.seed = seed;
      if (sim_corruption) sim.p0 = 1.0 - *sim_corruption / 100.0;
      write_simulation(sim, sim_dir, emit_latents);
      out << "simulation written to " << sim_dir << '\n';
    } else if (*bench) {
      bc.seed = seed;
      bc.threads = threads;
      bc.grid = parse_grid_kind(grid);
      if (!values.empty()) {
        bc.values = detail::parse_values(values);
      } else if (bc.grid == GridKind::n) {
        bc.values = {300, 600, 1000, 2000};
      } else if (bc.grid == GridKind::p0) {
        bc.values = {0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
      }
      bc.methods.clear();
      for (const auto& m : methods) bc.methods.push_back(parse_method(m));
      bc.sim.oracle_x = !finite_x;
      BenchResult res = run_benchmark(bc);
      std::ofstream csv(bench_out, std::ios::binary);
      require(static_cast<bool>(csv), ErrorCode::parse_error, "cannot write '" + bench_out + "'");
      write_reports_csv(csv, res.reports, bc.grid, timing);
      write_summary_table(out, res);
      std::size_t failed = 0;
      for (const auto& r : res.reports) failed += r.ok() ? 0 : 1;
      if (failed) err << failed << " replication cell(s) failed; see the status column of " << bench_out << '\n';
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}

}  // namespace noisymoe
