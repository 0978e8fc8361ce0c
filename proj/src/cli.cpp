#include "phreg/cli.hpp"

#include "phreg/error.hpp"
#include "phreg/inference.hpp"
#include "phreg/io.hpp"
#include "phreg/regression.hpp"
#include "phreg/simstudy.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace phreg::cli {

namespace {

using nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) {
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw UsageError("cannot parse quantile level '" + s + "'");
    }
    if (!(v > 0.0 && v < 1.0)) throw UsageError("quantile level " + s + " is outside (0, 1)");
    out.push_back(v);
  }
  return out;
}

// Runs body, translating exceptions into the exit-code contract.
template <class Body>
int guarded(CLI::App& app, const Args& args, std::ostream& out, std::ostream& err, Body&& body) {
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    return body();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {  // DimensionError, StructureError, bad names
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::domain_error& e) {  // DomainError, NumericDomainError
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

// Writes to the named file, or to `fallback` when the path is empty.
template <class Writer>
void emit(const std::string& path, std::ostream& fallback, Writer&& write) {
  if (path.empty()) {
    write(fallback);
    return;
  }
  std::ofstream file(path);
  if (!file) throw InputError("cannot write '" + path + "'");
  write(file);
}

Vector covariate_row(const Dataset& data, std::size_t i) {
  if (data.covariates() == 0) return Vector();
  return data.X.row(static_cast<Eigen::Index>(i)).transpose();
}

std::string format_number(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

int cmd_fit(const Args& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fit a phase-type regression model to a CSV file", "phreg fit"};
  std::string input, response = "y", covariates, structure = "coxian", family = "pareto", out_path, report_path;
  std::string link = "exp", fisher = "outer-product";
  int phases = 3, max_iter = 5000, threads = 1;
  std::uint64_t seed = 1;
  double tol = 1e-8;
  app.add_option("input", input, "CSV file with a header row")->required();
  app.add_option("--response", response, "Response column")->capture_default_str();
  app.add_option("--covariates", covariates, "Comma-separated covariate columns");
  app.add_option("--structure", structure, "exponential|erlang|hyperexp|coxian|gcoxian|general")->capture_default_str();
  app.add_option("--phases", phases, "Number of phases p")->capture_default_str();
  app.add_option("--family", family, "identity|pareto|weibull|lognormal|gompertz")->capture_default_str();
  app.add_option("--seed", seed, "Seed for the random starting law")->capture_default_str();
  app.add_option("--tol", tol, "Relative log-likelihood stopping tolerance")->capture_default_str();
  app.add_option("--max-iter", max_iter, "Maximum outer iterations")->capture_default_str();
  app.add_option("--out", out_path, "Model file to write")->required();
  app.add_option("--report", report_path, "Fit report file (default: <out>.report.json)");
  app.add_option("--link", link, "exp|softplus")->capture_default_str();
  app.add_option("--fisher", fisher, "outer-product|numerical-hessian")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads")->capture_default_str();

  return guarded(app, args, out, err, [&] {
    const CsvTable table = read_csv_file(input);
    const Dataset data = dataset_from_table(table, response, split_list(covariates));
    FitConfig config;
    config.structure = {parse_structure_kind(structure), phases};
    config.family = parse_transform_family(family);
    config.link = parse_link(link);
    config.seed = seed;
    config.stop_tol = tol;
    config.max_iter = max_iter;
    config.threads = threads;
    const FisherSource source = parse_fisher_source(fisher);
    check_structure(config.structure);

    const FitResult res = fit(data, config);
    const FitReport& rep = res.report;
    ModelDocument doc{res.model, data.names, response,
                      FitMetadata{rep.n, rep.loglik, rep.df, rep.aic, rep.bic, rep.iterations, rep.converged, seed}};
    save_model(out_path, doc);

    ordered_json report = {{"schema", "phreg-report/1"}, {"model_file", out_path}, {"fit", to_json(rep)}};
    if (data.covariates() > 0) report["beta"] = {{"names", data.names}, {"values", std::vector<double>(res.model.beta.data(), res.model.beta.data() + res.model.beta.size())}};
    if (res.model.inference_parameters().size() > 0) {
      try {
        ComputeOptions compute;
        compute.threads = threads;
        report["inference"] = to_json(wald_report(res.model, data, source, rep.converged, compute));
      } catch (const std::exception& e) {
        report["inference"] = {{"error", e.what()}};
      }
    }
    emit(report_path.empty() ? out_path + ".report.json" : report_path, out,
         [&](std::ostream& s) { s << report.dump(2) << '\n'; });

    out << "loglik " << format_number(rep.loglik) << "\ndf " << rep.df << "\naic " << format_number(rep.aic) << "\nbic "
        << format_number(rep.bic) << "\niterations " << rep.iterations << "\nconverged "
        << (rep.converged ? "true" : "false") << "\nseed " << seed << '\n';
    if (!rep.converged) {
      err << "warning: no convergence after " << rep.iterations << " iterations; model written and flagged\n";
      return kExitNotConverged;
    }
    return kExitOk;
  });
}

int cmd_predict(const Args& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional means and quantiles for covariate rows", "phreg predict"};
  std::string model_path, input, quantiles, out_path;
  double quad_tol = 1e-10;
  app.add_option("--model", model_path, "Model file")->required();
  app.add_option("input", input, "CSV with the model's covariate columns")->required();
  app.add_option("--quantiles", quantiles, "Comma-separated levels in (0, 1)");
  app.add_option("--quad-tol", quad_tol, "Quadrature tolerance for the mean")->capture_default_str();
  app.add_option("--out", out_path, "Output CSV (default: stdout)");

  return guarded(app, args, out, err, [&] {
    const std::vector<double> levels = parse_levels(quantiles);
    const ModelDocument doc = load_model(model_path);
    const CsvTable table = read_csv_file(input);
    std::vector<std::size_t> cols;
    for (const auto& name : doc.covariates) cols.push_back(table.column(name));

    std::ostringstream body;
    body << "row,mean";
    for (const auto& q : split_list(quantiles)) body << ",q_" << q;
    body << '\n';
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      Vector x(static_cast<Eigen::Index>(cols.size()));
      for (std::size_t j = 0; j < cols.size(); ++j) {
        x(static_cast<Eigen::Index>(j)) = table.rows[i][cols[j]];
        if (!std::isfinite(x(static_cast<Eigen::Index>(j))))
          throw InputError("column '" + doc.covariates[j] + "', data row " + std::to_string(i + 1) + ": value is not finite");
      }
      body << i + 1 << ',';
      try {
        const double mean = doc.model.transform.family() == TransformFamily::Weibull ? weibull_mean(doc.model, x)
                                                                                      : conditional_mean(doc.model, x, quad_tol);
        body << format_number(mean);
      } catch (const InfiniteMeanError&) {
        body << "inf-mean";
      }
      for (double q : levels) body << ',' << format_number(predict_quantile(doc.model, x, q));
      body << '\n';
    }
    emit(out_path, out, [&](std::ostream& s) { s << body.str(); });
    return kExitOk;
  });
}

int cmd_gof(const Args& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PIT residuals, PP-plot table and Kolmogorov-Smirnov statistic", "phreg gof"};
  std::string model_path, input, response, out_path;
  int threads = 1;
  app.add_option("--model", model_path, "Model file")->required();
  app.add_option("input", input, "Data CSV")->required();
  app.add_option("--response", response, "Response column (default: the model's)");
  app.add_option("--out", out_path, "PP-plot table CSV (default: stdout)");
  app.add_option("--threads", threads, "Worker threads")->capture_default_str();

  return guarded(app, args, out, err, [&] {
    const ModelDocument doc = load_model(model_path);
    const CsvTable table = read_csv_file(input);
    const Dataset data = dataset_from_table(table, response.empty() ? doc.response : response, doc.covariates);
    ComputeOptions compute;
    compute.threads = threads;
    const PitResiduals pit = pit_residuals(doc.model, data, compute);
    const double ks = ks_statistic(pit.values);
    const double pval = ks_pvalue(ks, pit.values.size());

    std::ostringstream body;
    body << "pit,uniform\n";
    for (const auto& [u, v] : pp_table(pit.values)) body << format_number(u) << ',' << format_number(v) << '\n';
    emit(out_path, out, [&](std::ostream& s) { s << body.str(); });
    std::ostream& summary = out_path.empty() ? err : out;
    summary << "n " << pit.values.size() << "\nks_statistic " << format_number(ks) << "\nks_pvalue "
            << format_number(pval) << "\nclamped " << pit.clamped.size() << '\n';
    if (!pit.clamped.empty()) err << "warning: " << pit.clamped.size() << " residuals underflowed and were clamped\n";
    return kExitOk;
  });
}

int cmd_simulate(const Args& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulate from a model file or the synthetic heterogeneous design", "phreg simulate"};
  std::string model_path, covariate_path, out_path, probs = "0.4,0.4,0.2";
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  double rho = 0.7;
  bool synthetic = false, labels = false;
  app.add_option("--model", model_path, "Model file");
  app.add_flag("--synthetic", synthetic, "Generate the synthetic three-component dataset");
  app.add_option("--n", n, "Sample size (ignored when --covariates-file is given)")->capture_default_str();
  app.add_option("--seed", seed, "Random seed")->capture_default_str();
  app.add_option("--covariates-file", covariate_path, "CSV of covariate rows, one draw per row");
  app.add_option("--rho", rho, "Copula correlation (synthetic)")->capture_default_str();
  app.add_option("--probs", probs, "Component probabilities (synthetic)")->capture_default_str();
  app.add_flag("--labels", labels, "Append the true component label (synthetic)");
  app.add_option("--out", out_path, "Output CSV (default: stdout)");

  return guarded(app, args, out, err, [&] {
    if (synthetic == !model_path.empty()) throw UsageError("give exactly one of --model and --synthetic");
    CsvTable table;
    if (synthetic) {
      SynthConfig config;
      config.n = n;
      config.seed = seed;
      config.rho = rho;
      const auto p = split_list(probs);
      if (p.size() != 3) throw UsageError("--probs needs three values");
      for (std::size_t k = 0; k < 3; ++k) config.probabilities[k] = std::stod(p[k]);
      const SynthSample s = generate(config);
      table.header = {"y", "X1", "X2"};
      if (labels) table.header.push_back("label");
      for (std::size_t i = 0; i < config.n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        std::vector<double> row{s.data.y(r), s.data.X(r, 0), s.data.X(r, 1)};
        if (labels) row.push_back(s.labels[i] + 1);
        table.rows.push_back(std::move(row));
      }
    } else {
      const ModelDocument doc = load_model(model_path);
      Dataset covs;
      if (!doc.covariates.empty()) {
        if (covariate_path.empty()) throw UsageError("a regression model needs --covariates-file");
        const CsvTable ct = read_csv_file(covariate_path);
        covs.X.resize(static_cast<Eigen::Index>(ct.rows.size()), static_cast<Eigen::Index>(doc.covariates.size()));
        for (std::size_t j = 0; j < doc.covariates.size(); ++j)
          covs.X.col(static_cast<Eigen::Index>(j)) = ct.values(doc.covariates[j]);
        n = ct.rows.size();
      }
      std::mt19937_64 rng(seed);
      table.header = {doc.response};
      table.header.insert(table.header.end(), doc.covariates.begin(), doc.covariates.end());
      for (std::size_t i = 0; i < n; ++i) {
        const Vector x = covariate_row(covs, i);
        const double m = doc.model.link(x.size() ? x.dot(doc.model.beta) : 0.0);
        if (!(m > 0.0) || !std::isfinite(m)) throw InputError("covariate row " + std::to_string(i + 1) + " overflows the link");
        const double y = doc.model.transform.g(sample_absorption_time(doc.model.law, rng) / m);
        std::vector<double> row{y};
        for (Eigen::Index j = 0; j < x.size(); ++j) row.push_back(x(j));
        table.rows.push_back(std::move(row));
      }
    }
    emit(out_path, out, [&](std::ostream& s) { write_csv(s, table); });
    return kExitOk;
  });
}

int cmd_study(const Args& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compare Gamma GLMs with Matrix-Pareto regressions on synthetic data", "phreg study"};
  std::string models = "gamma-glm-x1,gamma-glm-x1x2,m-pareto3-x1,m-pareto3-x1x2", out_path, json_path;
  std::string fisher = "outer-product";
  std::size_t n = 1000;
  std::uint64_t seed = 1, fit_seed = 1;
  int max_iter = 5000, threads = 1;
  double tol = 1e-8;
  app.add_option("--n", n, "Sample size")->capture_default_str();
  app.add_option("--seed", seed, "Data seed")->capture_default_str();
  app.add_option("--fit-seed", fit_seed, "Seed for the starting laws")->capture_default_str();
  app.add_option("--models", models, "Comma-separated model list")->capture_default_str();
  app.add_option("--max-iter", max_iter, "Maximum outer iterations per PH fit")->capture_default_str();
  app.add_option("--tol", tol, "Relative stopping tolerance")->capture_default_str();
  app.add_option("--fisher", fisher, "outer-product|numerical-hessian")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads")->capture_default_str();
  app.add_option("--out", out_path, "Comparison table CSV (default: stdout)");
  app.add_option("--json", json_path, "Comparison table as JSON");

  return guarded(app, args, out, err, [&] {
    SynthConfig config;
    config.n = n;
    config.seed = seed;
    std::vector<StudyModel> list;
    for (const auto& name : split_list(models)) list.push_back(parse_study_model(name));
    StudyOptions options;
    options.fit_seed = fit_seed;
    options.max_iter = max_iter;
    options.stop_tol = tol;
    options.source = parse_fisher_source(fisher);
    options.threads = threads;
    const auto rows = run_study(config, list, options);
    emit(out_path, out, [&](std::ostream& s) { write_study_csv(s, rows); });
    if (!json_path.empty()) {
      auto j = to_json(rows);
      j["seed"] = seed;
      j["fit_seed"] = fit_seed;
      j["n"] = n;
      emit(json_path, out, [&](std::ostream& s) { s << j.dump(2) << '\n'; });
    }
    for (const auto& r : rows)
      if (!r.ok) err << "warning: " << to_string(r.model) << " failed: " << r.error << '\n';
    return kExitOk;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const std::string usage =
      "usage: phreg <command> [options]\n\n"
      "commands:\n"
      "  fit       fit a phase-type regression model\n"
      "  predict   conditional means and quantiles\n"
      "  gof       PIT residuals and KS statistic\n"
      "  simulate  draw samples from a model or the synthetic design\n"
      "  study     GLM vs Matrix-Pareto comparison table\n\n"
      "Run 'phreg <command> --help' for options.\n";
  if (argc < 2) {
    err << usage;
    return kExitUsage;
  }
  const std::string command = argv[1];
  const Args rest(argv + 2, argv + argc);
  if (command == "--help" || command == "-h" || command == "help") {
    out << usage;
    return kExitOk;
  }
  if (command == "fit") return cmd_fit(rest, out, err);
  if (command == "predict") return cmd_predict(rest, out, err);
  if (command == "gof") return cmd_gof(rest, out, err);
  if (command == "simulate") return cmd_simulate(rest, out, err);
  if (command == "study") return cmd_study(rest, out, err);
  err << "unknown command '" << command << "'\n" << usage;
  return kExitUsage;
}

}  // namespace phreg::cli
