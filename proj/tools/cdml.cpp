// cdml: estimate, simulate, calibrate.
//
// stdout carries only the machine-readable result; logs go to stderr.
// Exit codes: 0 success, 2 invalid input, 3 estimation failure.

#include <CLI11.hpp>
#include <cdml/cdml.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace {

using namespace cdml;

constexpr int kExitInput = 2;
constexpr int kExitEstimation = 3;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    for (const auto& item : split_list(s)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValueError("'" + item + "' is not an integer");
        }
    }
    return out;
}

std::size_t column_index(const std::vector<std::string>& names, const std::string& name) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw SchemaError("'" + name + "' is not a covariate column");
    return static_cast<std::size_t>(it - names.begin());
}

void log_config(const char* command, const Json& config) {
    std::cerr << "cdml " << command << " config: " << config.dump() << '\n';
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct EstimateFlags {
    std::string data, outcome, treatment, covariates;
    std::string estimator = "cdml";
    int folds = 5;
    std::string fold_col;
    std::string ci = "auto";
    int boot_reps = 10000;
    double level = 0.95;
    std::uint64_t seed = 0;
    std::string arms;
    std::string arm_set;
    std::string mu_cols, pi_cols;
    std::string outcome_learner = "kernel", propensity_learner = "kernel";
    std::string kernel_feature, strata;
    int cv_folds = 5;
    std::string dump_replicates;
    std::optional<double> outcome_bound;
    bool pooled_outcome = false;
    bool no_truncation = false;
};

LearnerKind learner_kind(const std::string& s) {
    return s == "logistic" ? LearnerKind::logistic_main_terms : LearnerKind::kernel_stratified;
}

LearnerSpec learner_spec(const EstimateFlags& f, const std::vector<std::string>& covariates) {
    LearnerSpec spec;
    spec.outcome_model = learner_kind(f.outcome_learner);
    spec.propensity_model = learner_kind(f.propensity_learner);
    spec.cv_folds = f.cv_folds;
    spec.kernel_feature = static_cast<int>(f.kernel_feature.empty() ? 0 : column_index(covariates, f.kernel_feature));
    for (const auto& s : split_list(f.strata)) spec.strata_features.push_back(static_cast<int>(column_index(covariates, s)));
    return spec;
}

// External columns are given in arm-label order. A binary design may give a
// single propensity column, read as the probability of the larger label.
Eigen::MatrixXd external_matrix(const Table& t, const std::vector<std::string>& cols, const Dataset& d, bool propensity) {
    const auto n = static_cast<Eigen::Index>(d.size());
    const int k = d.num_arms();
    const bool complement = propensity && k == 2 && cols.size() == 1;
    if (!complement && static_cast<int>(cols.size()) != k)
        throw SchemaError(std::string(propensity ? "--pi-cols" : "--mu-cols") + " needs one column per arm (" + std::to_string(k) + ")");
    Eigen::MatrixXd m(n, k);
    for (std::size_t c = 0; c < cols.size(); ++c) {
        const auto& col = t.column(cols[c]);
        detail::require_finite(col, cols[c]);
        const int a = complement ? 1 : static_cast<int>(c);
        for (Eigen::Index i = 0; i < n; ++i) m(i, a) = col[static_cast<std::size_t>(i)];
    }
    if (complement) m.col(0) = 1.0 - m.col(1).array();
    return m;
}

Json run_partial_cov(const EstimateFlags& f, const Table& t, const std::vector<std::string>& covariates, Json config) {
    const auto& y = t.column(f.outcome);
    const auto& x = t.column(f.treatment);
    detail::require_finite(y, f.outcome);
    detail::require_finite(x, f.treatment);
    const std::size_t n = t.rows();
    std::vector<double> m_hat, pi_hat;
    const auto mu_cols = split_list(f.mu_cols), pi_cols = split_list(f.pi_cols);
    if (mu_cols.size() > 1 || pi_cols.size() > 1) throw SchemaError("partial_cov takes one --mu-cols and one --pi-cols column");
    if (!mu_cols.empty() != !pi_cols.empty()) throw SchemaError("partial_cov needs both --mu-cols and --pi-cols or neither");
    if (!mu_cols.empty()) {
        m_hat = t.column(mu_cols[0]);
        pi_hat = t.column(pi_cols[0]);
        detail::require_finite(m_hat, mu_cols[0]);
        detail::require_finite(pi_hat, pi_cols[0]);
    } else {
        if (covariates.empty()) throw SchemaError("--covariates is empty");
        const auto& w = t.column(f.kernel_feature.empty() ? covariates[0] : f.kernel_feature);
        detail::require_finite(w, "kernel feature");
        std::vector<std::int64_t> strata(n, 0);
        const auto strata_cols = split_list(f.strata);
        if (!strata_cols.empty()) {
            std::map<std::vector<double>, std::int64_t> ids;
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> key;
                for (const auto& c : strata_cols) key.push_back(t.column(c)[i]);
                strata[i] = ids.emplace(key, static_cast<std::int64_t>(ids.size())).first->second;
            }
        }
        std::vector<int> fold_id;
        if (!f.fold_col.empty()) {
            for (double v : t.column(f.fold_col)) {
                if (!detail::is_integer(v) || v < 1 || v > f.folds) throw FoldError("fold value outside 1.." + std::to_string(f.folds));
                fold_id.push_back(static_cast<int>(v) - 1);
            }
        } else {
            Rng rng = Rng::stream(f.seed, {0xf01d});
            fold_id = assign_folds(n, f.folds, rng);
        }
        check_folds(fold_id, f.folds);
        const int threads = default_threads();
        pi_hat = crossfit_kernel_regression(w, x, strata, fold_id, f.folds, {}, f.cv_folds, splitmix64(f.seed ^ 1), threads);
        m_hat = crossfit_kernel_regression(w, y, strata, fold_id, f.folds, {}, f.cv_folds, splitmix64(f.seed ^ 2), threads);
    }
    auto report = run_partial_covariance(x, y, m_hat, pi_hat, f.level);
    report.config = std::move(config);
    return to_json(report);
}

int cmd_estimate(const EstimateFlags& f) {
    const auto covariates = split_list(f.covariates);
    const bool external = !f.mu_cols.empty() || !f.pi_cols.empty();

    Json config{{"data", f.data},
                {"outcome", f.outcome},
                {"treatment", f.treatment},
                {"covariates", covariates},
                {"estimator", f.estimator},
                {"folds", f.folds},
                {"fold_col", f.fold_col},
                {"level", f.level},
                {"seed", f.seed},
                {"cv_folds", f.cv_folds}};
    if (external) {
        config["mu_cols"] = split_list(f.mu_cols);
        config["pi_cols"] = split_list(f.pi_cols);
    }

    const Table table = read_csv(f.data);

    if (f.estimator == "partial_cov") {
        if (f.ci != "auto" && f.ci != "wald") throw ValueError("partial_cov supports --ci wald only");
        config["ci"] = "wald";
        if (!external) {
            config["learner"] = "kernel_stratified";
            config["kernel_feature"] = f.kernel_feature.empty() && !covariates.empty() ? covariates[0] : f.kernel_feature;
            config["strata"] = split_list(f.strata);
        }
        log_config("estimate", config);
        std::cout << run_partial_cov(f, table, covariates, config).dump(2) << '\n';
        return 0;
    }

    Schema schema;
    schema.outcome = f.outcome;
    schema.treatment = f.treatment;
    schema.covariates = covariates;
    if (!f.fold_col.empty()) schema.fold = f.fold_col;
    schema.num_folds = f.folds;
    if (!f.arm_set.empty()) schema.arms = parse_int_list(f.arm_set);
    schema.outcome_bound = f.outcome_bound;
    schema.seed = f.seed;
    const Dataset data = validate_dataset(table, schema);

    EstimatorConfig ec;
    ec.estimator = f.estimator == "aipw" ? EstimatorKind::aipw
                   : f.estimator == "ipw" ? EstimatorKind::ipw
                   : f.estimator == "plugin" ? EstimatorKind::plugin
                                             : EstimatorKind::cdml;
    const std::string ci = f.ci == "auto" ? (ec.estimator == EstimatorKind::cdml ? "bootstrap" : "wald") : f.ci;
    ec.ci_method = ci == "wald" ? CiMethod::wald : ci == "bootstrap-percentile" ? CiMethod::bootstrap_percentile : CiMethod::bootstrap_normal;
    ec.level = f.level;
    ec.boot_reps = f.boot_reps;
    ec.seed = f.seed;
    ec.aipw_truncation = !f.no_truncation;
    ec.stratified_outcome = !f.pooled_outcome;
    ec.threads = default_threads();
    if (f.arms.empty()) {
        if (data.num_arms() < 2) throw ValueError("an ATE needs two arms; pass --arms LABEL for a counterfactual mean");
        ec.target = {data.num_arms() - 1, 0};
    } else {
        const auto labels = parse_int_list(f.arms);
        if (labels.empty() || labels.size() > 2) throw ValueError("--arms takes one label (mean) or two labels (contrast)");
        ec.target.arm1 = data.arm_index(labels[0]);
        ec.target.arm0 = labels.size() == 2 ? std::optional<int>(data.arm_index(labels[1])) : std::nullopt;
    }

    NuisanceMatrix supplied;
    LearnerSpec spec;
    if (external) {
        if (f.mu_cols.empty() || f.pi_cols.empty()) throw SchemaError("external nuisances need both --mu-cols and --pi-cols");
        supplied.mu = external_matrix(table, split_list(f.mu_cols), data, false);
        supplied.pi = external_matrix(table, split_list(f.pi_cols), data, true);
        supplied.source = NuisanceSource::external_columns;
        spec.outcome_model = spec.propensity_model = LearnerKind::external;
    } else {
        spec = learner_spec(f, covariates);
    }
    config["ci"] = ci;
    config["arms"] = data.arm_labels;
    config["learners"] = to_json(spec);
    config["outcome_bound"] = data.outcome_bound;
    config["estimator_config"] = to_json(ec, data);
    log_config("estimate", config);

    const NuisanceMatrix nuis = crossfit_nuisances(data, spec, splitmix64(f.seed ^ 0x5eed), external ? &supplied : nullptr, ec.threads);
    auto result = run_estimate(data, nuis, ec);
    config.update(result.report.config);
    result.report.config = config;
    if (!f.dump_replicates.empty()) {
        if (!result.bootstrap) throw ValueError("--dump-replicates requires a bootstrap interval");
        write_text(f.dump_replicates, replicates_csv(*result.bootstrap));
    }
    std::cout << to_json(result.report).dump(2) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateFlags {
    std::string scenario;
    std::size_t n = 1000;
    int reps = 500;
    int folds = 5;
    int boot_reps = 1000;
    std::uint64_t seed = 1;
    double level = 0.95;
    std::string out = ".";
};

int cmd_simulate(const SimulateFlags& f) {
    ScenarioConfig cfg;
    cfg.scenario = parse_scenario(f.scenario);
    cfg.n = f.n;
    cfg.reps = f.reps;
    cfg.folds = f.folds;
    cfg.boot_reps = f.boot_reps;
    cfg.seed = f.seed;
    cfg.level = f.level;
    cfg.threads = default_threads();
    if (cfg.n < 2 * static_cast<std::size_t>(std::max(cfg.folds, 1))) throw FoldError("--n must be at least twice --folds");
    auto config = to_json(cfg);
    config["out"] = f.out;
    log_config("simulate", config);

    std::filesystem::create_directories(f.out);
    const auto result = run_experiment(cfg);
    const std::filesystem::path dir(f.out);
    write_text((dir / "replicates.csv").string(), replicate_rows_csv(result));
    write_text((dir / "figure_long.csv").string(), figure_long_csv(result));
    const auto metrics = metrics_json(result);
    write_text((dir / "metrics.json").string(), metrics.dump(2) + "\n");

    char line[160];
    std::snprintf(line, sizeof line, "%-16s %10s %10s %10s %9s\n", "estimator", "bias", "se", "mean_se", "coverage");
    std::cerr << "tau_true = " << format_double(result.tau_true) << '\n' << line;
    for (const auto& m : result.metrics) {
        std::snprintf(line, sizeof line, "%-16s %10.5f %10.5f %10.5f %9.3f\n", m.estimator.c_str(), m.bias, m.se, m.mean_se, m.coverage);
        std::cerr << line;
    }
    std::cout << metrics.dump(2) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

struct CalibrateFlags {
    std::string data, pred, target, out;
    std::string loss = "ls";
    std::string weights;
    std::vector<double> bounds;
};

int cmd_calibrate(const CalibrateFlags& f) {
    Table table = read_csv(f.data);
    const auto& x = table.column(f.pred);
    const auto& y = table.column(f.target);
    detail::require_finite(x, f.pred);
    detail::require_finite(y, f.target);
    Json config{{"data", f.data}, {"pred", f.pred}, {"target", f.target}, {"loss", f.loss}, {"out", f.out}, {"weights", f.weights}};

    Calibrator cal;
    if (f.loss == "ls") {
        std::vector<double> w;
        if (!f.weights.empty()) {
            w = table.column(f.weights);
            detail::require_finite(w, f.weights);
        }
        log_config("calibrate", config);
        cal = fit_ls_isotonic(x, y, w);
    } else {
        // Riesz loss: --pred holds alpha at the observed point, --target alpha at the evaluation point.
        const double lo = f.bounds.empty() ? 0.0 : f.bounds[0];
        const double hi = f.bounds.empty() ? static_cast<double>(table.rows()) : f.bounds[1];
        config["bounds"] = {lo, hi};
        log_config("calibrate", config);
        cal = calibrate_riesz_generic(x, y, lo, hi);
    }
    const std::string column = f.pred + "_calibrated";
    if (table.find(column)) throw SchemaError("column '" + column + "' already exists");
    auto calibrated = cal.predict(x);
    table.add_column(column, std::move(calibrated));

    std::ostringstream csv;
    write_csv(csv, table);
    write_text(f.out, csv.str());
    const std::string json_path = f.out + ".calibrator.json";
    write_text(json_path, to_json(cal).dump(2) + "\n");
    std::cout << Json{{"schema_version", kSchemaVersion},
                      {"rows", table.rows()},
                      {"column", column},
                      {"distinct_levels", cal.distinct_levels()},
                      {"calibrator", json_path}}
                     .dump(2)
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Calibrated debiased machine learning"};
    app.require_subcommand(1);

    EstimateFlags ef;
    auto* est = app.add_subcommand("estimate", "Estimate a counterfactual mean, ATE or partial covariance from a CSV file");
    est->add_option("--data", ef.data, "Input CSV with a header row")->required();
    est->add_option("--outcome", ef.outcome, "Outcome column")->required();
    est->add_option("--treatment", ef.treatment, "Treatment column (exposure for partial_cov)")->required();
    est->add_option("--covariates", ef.covariates, "Comma-separated covariate columns")->required();
    est->add_option("--estimator", ef.estimator)->check(CLI::IsMember({"cdml", "aipw", "ipw", "plugin", "partial_cov"}))->capture_default_str();
    est->add_option("--folds", ef.folds, "Cross-fitting folds J")->check(CLI::PositiveNumber)->capture_default_str();
    est->add_option("--fold-col", ef.fold_col, "Column with 1-based fold labels");
    est->add_option("--ci", ef.ci, "Interval: bootstrap (normal), bootstrap-percentile or wald")
        ->check(CLI::IsMember({"auto", "bootstrap", "bootstrap-percentile", "wald"}))
        ->capture_default_str();
    est->add_option("--boot-reps", ef.boot_reps, "Bootstrap replicates K")->capture_default_str();
    est->add_option("--level", ef.level, "Confidence level")->capture_default_str();
    est->add_option("--seed", ef.seed)->capture_default_str();
    est->add_option("--arms", ef.arms, "Target arm label, or 'a1,a0' for a contrast (default: largest vs smallest)");
    est->add_option("--arm-set", ef.arm_set, "Declared arm labels (default: observed)");
    auto* mu_opt = est->add_option("--mu-cols", ef.mu_cols, "External outcome regression columns, one per arm");
    auto* pi_opt = est->add_option("--pi-cols", ef.pi_cols, "External propensity columns, one per arm");
    auto* ol = est->add_option("--outcome-learner", ef.outcome_learner)->check(CLI::IsMember({"kernel", "logistic"}))->capture_default_str();
    auto* pl = est->add_option("--propensity-learner", ef.propensity_learner)->check(CLI::IsMember({"kernel", "logistic"}))->capture_default_str();
    est->add_option("--kernel-feature", ef.kernel_feature, "Covariate smoothed by the kernel learner (default: first)");
    est->add_option("--strata", ef.strata, "Comma-separated discrete covariates stratifying the kernel learner");
    est->add_option("--cv-folds", ef.cv_folds, "Bandwidth cross-validation folds")->check(CLI::Range(2, 1000))->capture_default_str();
    est->add_option("--dump-replicates", ef.dump_replicates, "Write bootstrap replicate estimates to this CSV");
    est->add_option("--outcome-bound", ef.outcome_bound, "Declared bound on |Y| (default: max |Y|)");
    est->add_flag("--pooled-outcome-calibration", ef.pooled_outcome, "Calibrate the outcome regression on all arms jointly");
    est->add_flag("--no-aipw-truncation", ef.no_truncation, "Do not clip propensities for ipw/aipw");
    mu_opt->excludes(ol)->excludes(pl);
    pi_opt->excludes(ol)->excludes(pl);

    SimulateFlags sf;
    auto* sim = app.add_subcommand("simulate", "Run the Monte Carlo study for one scenario");
    sim->add_option("--scenario", sf.scenario, "a (both consistent), b (propensity only), c (outcome only)")->required();
    sim->add_option("--n", sf.n)->check(CLI::PositiveNumber)->capture_default_str();
    sim->add_option("--reps", sf.reps)->check(CLI::PositiveNumber)->capture_default_str();
    sim->add_option("--folds", sf.folds)->check(CLI::Range(2, 1000))->capture_default_str();
    sim->add_option("--boot-reps", sf.boot_reps)->capture_default_str();
    sim->add_option("--seed", sf.seed)->capture_default_str();
    sim->add_option("--level", sf.level)->capture_default_str();
    sim->add_option("--out", sf.out, "Output directory")->capture_default_str();

    CalibrateFlags cf;
    auto* calib = app.add_subcommand("calibrate", "Isotonic calibration of a prediction column");
    calib->add_option("--data", cf.data)->required();
    calib->add_option("--pred", cf.pred, "Predictor column (ls) or alpha at the observed point (riesz)")->required();
    calib->add_option("--target", cf.target, "Target column (ls) or alpha at the evaluation point (riesz)")->required();
    calib->add_option("--loss", cf.loss)->check(CLI::IsMember({"ls", "riesz"}))->capture_default_str();
    calib->add_option("--out", cf.out, "Output CSV; the calibrator is written to <out>.calibrator.json")->required();
    calib->add_option("--weights", cf.weights, "Positive weight column (ls only)");
    calib->add_option("--bounds", cf.bounds, "Level bounds lo hi (riesz; default 0 n)")->expected(2)->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (*est) return cmd_estimate(ef);
        if (*sim) return cmd_simulate(sf);
        if (*calib) return cmd_calibrate(cf);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const EstimationError& e) {
        std::cerr << "estimation failed: " << e.what() << '\n';
        return kExitEstimation;
    } catch (const std::exception& e) {
        std::cerr << "estimation failed: " << e.what() << '\n';
        return kExitEstimation;
    }
    return kExitInput;
}
