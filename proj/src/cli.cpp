#include "hdspc/cli.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "hdspc/diagnosis.hpp"
#include "hdspc/experiment_config.hpp"
#include "hdspc/io.hpp"
#include "hdspc/monitoring.hpp"
#include "hdspc/pca_model.hpp"
#include "hdspc/simulation.hpp"

#ifndef HDSPC_VERSION
#define HDSPC_VERSION "0.0.0"
#endif

namespace hdspc {

namespace fs = std::filesystem;

namespace {

struct LoadedModel {
    PCModel model;
    std::optional<Vector> scale; // per-column divisor applied before projection
    std::vector<std::string> columns;
};

LoadedModel load_cli_model(const fs::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    LoadedModel lm{model_from_json(doc), std::nullopt, {}};
    if (doc.contains("column_scale")) {
        const auto s = doc["column_scale"].get<std::vector<double>>();
        if (static_cast<Index>(s.size()) != lm.model.dim()) throw DataError(path.string() + ": column_scale length differs from p");
        lm.scale = Eigen::Map<const Vector>(s.data(), static_cast<Index>(s.size()));
    }
    if (doc.contains("columns")) lm.columns = doc["columns"].get<std::vector<std::string>>();
    return lm;
}

Matrix prepare_rows(const LoadedModel& lm, Matrix data, const std::string& source) {
    if (data.cols() != lm.model.dim())
        throw DataError(source + ": " + std::to_string(data.cols()) + " columns, model expects " +
                        std::to_string(lm.model.dim()));
    if (lm.scale) data = data.array().rowwise() / lm.scale->transpose().array();
    return data;
}

std::string column_name(const LoadedModel& lm, Index j) {
    if (static_cast<std::size_t>(j) < lm.columns.size() && !lm.columns[static_cast<std::size_t>(j)].empty())
        return lm.columns[static_cast<std::size_t>(j)];
    return "x" + std::to_string(j + 1);
}

std::pair<Index, Index> parse_rows(const std::string& spec, Index n) {
    // "a:b", 1-based and inclusive; either end may be omitted.
    if (spec.empty()) return {0, n};
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("--rows expects a:b");
    const std::string a = spec.substr(0, colon), b = spec.substr(colon + 1);
    const Index lo = a.empty() ? 1 : static_cast<Index>(parse_double(a, "--rows"));
    const Index hi = b.empty() ? n : static_cast<Index>(parse_double(b, "--rows"));
    if (lo < 1 || hi < lo) throw std::invalid_argument("--rows range is empty or invalid");
    if (hi > n) throw DataError("--rows " + spec + " exceeds the " + std::to_string(n) + " available rows");
    return {lo - 1, hi};
}

int cmd_fit(const fs::path& input, const fs::path& output, bool header, std::optional<double> eig_floor,
            bool standardize, std::ostream& out) {
    const CsvTable table = read_csv_file(input, header);
    if (table.data.rows() < 2) throw DataError(input.string() + ": at least two observations are required");
    Matrix data = table.data;
    std::optional<Vector> scale;
    if (standardize) {
        const Vector mean = data.colwise().mean().transpose();
        const Vector sd =
            ((data.rowwise() - mean.transpose()).colwise().squaredNorm() / static_cast<double>(data.rows() - 1))
                .transpose()
                .cwiseSqrt();
        for (Index j = 0; j < sd.size(); ++j)
            if (!(sd[j] > 0.0)) throw DataError(input.string() + ": column " + std::to_string(j + 1) + " is constant");
        data = data.array().rowwise() / sd.transpose().array();
        scale = sd;
    }
    const PCModel model = eig_floor ? fit_pca(data, *eig_floor) : fit_pca(data);
    nlohmann::json doc = model_to_json(model);
    if (scale) doc["column_scale"] = std::vector<double>(scale->data(), scale->data() + scale->size());
    if (!table.header.empty()) doc["columns"] = table.header;
    write_text_file(output, doc.dump(1) + "\n");
    write_manifest(output, make_manifest("fit",
                                         {{"header", header},
                                          {"eig_floor", eig_floor ? nlohmann::json(*eig_floor) : nlohmann::json(nullptr)},
                                          {"standardize", standardize}},
                                         {input}, {output}));
    out << "fitted p=" << model.dim() << " from n=" << table.data.rows() << " observations; lambda_1="
        << model.eigvals()[0] << " lambda_p=" << model.eigvals()[model.dim() - 1] << "\n";
    return kExitClean;
}

struct CalibrateArgs {
    fs::path model, output;
    double gamma = 0.4, nu = 0.5;
    std::optional<double> target_arl, alpha;
    std::string mode, variance_mode = "asymptotic";
    std::size_t reps = 1000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
};

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out) {
    const LoadedModel lm = load_cli_model(a.model);
    const Index p = lm.model.dim();
    MonitorConfig cfg;
    cfg.gamma = a.gamma;
    cfg.nu = a.nu;
    cfg.alpha = a.alpha;
    cfg.target_arl = a.target_arl;
    if (!cfg.alpha && !cfg.target_arl) cfg.target_arl = 200.0;
    cfg.variance_mode = parse_variance_mode(a.variance_mode);
    cfg.calibration_mode = a.mode.empty() ? default_calibration_mode(p) : parse_calibration_mode(a.mode);
    cfg.validate();
    McOptions opts;
    opts.reps = a.reps;
    opts.seed = a.seed;
    opts.workers = a.workers;
    const CalibrationReport rep = calibrate(p, cfg, opts);
    write_text_file(a.output, report_to_json(rep).dump(1) + "\n");
    write_manifest(a.output, make_manifest("calibrate",
                                           {{"gamma", a.gamma},
                                            {"nu", a.nu},
                                            {"alpha", cfg.type1_rate()},
                                            {"target_arl", cfg.in_control_arl()},
                                            {"mode", to_string(cfg.calibration_mode)},
                                            {"variance_mode", a.variance_mode},
                                            {"reps", a.reps},
                                            {"seed", a.seed}},
                                           {a.model}, {a.output}));
    out << "R0=" << std::setprecision(10) << rep.r0 << " (" << to_string(rep.mode);
    if (rep.empirical_arl) out << ", empirical in-control ARL " << std::setprecision(5) << *rep.empirical_arl;
    out << ")\n";
    if (!rep.converged) out << "warning: calibration did not reach the target within tolerance\n";
    return kExitClean;
}

struct MonitorArgs {
    fs::path model, calibration;
    std::vector<fs::path> inputs;
    std::optional<fs::path> output;
    bool image = false, header = false, contributions = false;
};

int cmd_monitor(const MonitorArgs& a, std::ostream& out, std::ostream& err) {
    const LoadedModel lm = load_cli_model(a.model);
    CalibrationReport rep;
    try {
        rep = report_from_json(nlohmann::json::parse(read_text_file(a.calibration)));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(a.calibration.string() + ": " + e.what());
    }
    if (rep.p != lm.model.dim())
        throw DataError("calibration was computed for p=" + std::to_string(rep.p) + ", model has p=" +
                        std::to_string(lm.model.dim()));
    MonitorConfig cfg;
    cfg.gamma = rep.gamma;
    cfg.nu = rep.nu;
    cfg.variance_mode = rep.variance_mode;
    cfg.alpha = rep.alpha;

    // Several inputs form one stream; the chart state carries across files.
    MonitorState state = MonitorState::initial(lm.model.dim(), rep.r0);
    std::vector<ChartPoint> points;
    std::int64_t t = 0;
    for (const auto& input : a.inputs) {
        const Matrix raw = a.image ? read_image_matrix(input, a.header) : read_csv_file(input, a.header).data;
        const Matrix rows = prepare_rows(lm, raw, input.string());
        for (Index i = 0; i < rows.rows(); ++i)
            points.push_back(monitor_step(state, lm.model, Observation{rows.row(i).transpose(), ++t}, cfg));
    }

    std::ostringstream chart;
    write_chart_csv(chart, points, rep.r0, a.contributions);
    std::ostream& summary = a.output ? out : err;
    if (a.output) {
        write_text_file(*a.output, chart.str());
        std::vector<fs::path> inputs{a.model, a.calibration};
        inputs.insert(inputs.end(), a.inputs.begin(), a.inputs.end());
        write_manifest(*a.output,
                       make_manifest("monitor", {{"image", a.image}, {"header", a.header}}, inputs, {*a.output}));
    } else {
        out << chart.str();
    }
    if (state.first_alarm) {
        const auto n_alarms = std::count_if(points.begin(), points.end(), [](const ChartPoint& p) { return p.alarm; });
        summary << "alarm at t=" << *state.first_alarm << " (" << n_alarms << " of " << points.size()
                << " points above R0=" << rep.r0 << ")\n";
        return kExitAlarm;
    }
    summary << "no alarm in " << points.size() << " observations\n";
    return kExitClean;
}

struct DiagnoseArgs {
    fs::path model, input;
    std::optional<fs::path> output;
    std::string method = "pcsr", rows, bic = "known_variance";
    bool header = false, no_refit = false;
    int path_points = 50;
    double decades = 4.0;
};

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
    const LoadedModel lm = load_cli_model(a.model);
    const Matrix all = prepare_rows(lm, read_image_matrix(a.input, a.header), a.input.string());
    if (all.rows() == 0) throw DataError(a.input.string() + ": no observations in the diagnosis window");
    const auto [lo, hi] = parse_rows(a.rows, all.rows());
    const Matrix window = all.middleRows(lo, hi - lo);

    PathConfig path;
    path.points = a.path_points;
    path.decades = a.decades;
    path.refit = !a.no_refit;
    if (a.bic == "profile")
        path.bic = BicForm::profile;
    else if (a.bic != "known_variance")
        throw std::invalid_argument("--bic must be known_variance or profile");
    const DiagnosisMethod method = parse_diagnosis_method(a.method);
    const DiagnosisResult res =
        method == DiagnosisMethod::pcsr ? diagnose(lm.model, window, path) : diagnose_leb(lm.model, window, path);

    Vector shift = res.estimate;
    if (lm.scale) shift = shift.cwiseProduct(*lm.scale);
    nlohmann::json doc = diagnosis_to_json(res);
    doc["method"] = a.method;
    doc["m"] = window.rows();
    doc["shift"] = std::vector<double>(shift.data(), shift.data() + shift.size());
    nlohmann::json names = nlohmann::json::array();
    for (Index j : res.best.support) names.push_back(column_name(lm, j));
    doc["support_names"] = names;
    if (a.output) {
        write_text_file(*a.output, doc.dump(1) + "\n");
        write_manifest(*a.output, make_manifest("diagnose",
                                                {{"method", a.method},
                                                 {"rows", a.rows},
                                                 {"path_points", a.path_points},
                                                 {"decades", a.decades},
                                                 {"bic", a.bic},
                                                 {"refit", !a.no_refit}},
                                                {a.model, a.input}, {*a.output}));
    }
    out << a.method << ": " << res.best.support.size() << " shifted variable(s) from m=" << window.rows()
        << " observations\n";
    out << std::left << std::setw(8) << "index" << std::setw(16) << "variable" << "shift\n";
    for (Index j : res.best.support)
        out << std::left << std::setw(8) << j + 1 << std::setw(16) << column_name(lm, j) << std::setprecision(6)
            << shift[j] << "\n";
    return kExitClean;
}

int cmd_experiment(const fs::path& config, const std::string& prefix, std::optional<unsigned> workers,
                   std::ostream& out) {
    ExperimentPlan plan = parse_experiment(read_key_values_file(config));
    if (workers) {
        for (auto& c : plan.type1) c.workers = *workers;
        if (plan.arl) plan.arl->workers = *workers;
        if (plan.diagnosis) plan.diagnosis->workers = *workers;
    }
    const ExperimentOutput res = run_experiment(plan);
    const fs::path csv = prefix + ".csv", json = prefix + ".json";
    write_text_file(csv, res.csv);
    write_text_file(json, res.json.dump(1) + "\n");
    const auto manifest = make_manifest("experiment", {{"config", read_key_values_file(config)}}, {config}, {csv, json});
    write_manifest(csv, manifest);
    write_manifest(json, manifest);
    out << res.csv;
    return kExitClean;
}

struct SynthArgs {
    fs::path output;
    std::optional<fs::path> phase1, model_out;
    std::uint64_t seed = 1;
    double depth = RollingImageSpec{}.depth;
};

int cmd_synth_image(const SynthArgs& a, std::ostream& out) {
    RollingImageSpec spec;
    spec.seed = a.seed;
    spec.depth = a.depth;
    const RollingImage img = gen_rolling_image(spec);
    std::ostringstream os;
    if (a.output.extension() == ".csv")
        write_csv(os, img.image);
    else
        write_pgm(os, img.image);
    write_text_file(a.output, os.str());
    std::vector<fs::path> outputs{a.output};
    if (a.phase1) {
        std::ostringstream p1;
        write_csv(p1, img.phase1);
        write_text_file(*a.phase1, p1.str());
        outputs.push_back(*a.phase1);
    }
    if (a.model_out) {
        save_model(from_known(img.mean, img.covariance), *a.model_out);
        outputs.push_back(*a.model_out);
    }
    write_manifest(a.output, make_manifest("synth-image", {{"seed", a.seed}, {"depth", a.depth}}, {}, outputs));
    out << "image " << spec.rows << "x" << spec.width << ", defect rows " << spec.change_row << ".." << spec.rows
        << ", " << img.shifted.size() << " defect columns\n";
    return kExitClean;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"High-dimensional process monitoring (APC) and shift diagnosis (PCSR)", "hdspc"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("hdspc ") + HDSPC_VERSION);

    // fit
    fs::path fit_in, fit_out;
    bool fit_header = false, fit_std = false;
    std::optional<double> fit_floor;
    auto* fit = app.add_subcommand("fit", "Fit a Phase-I PCA model from a csv of in-control observations");
    fit->add_option("input", fit_in, "csv, one observation per row")->required();
    fit->add_option("--out,-o", fit_out, "model json")->required();
    fit->add_flag("--header", fit_header, "first line holds column names");
    fit->add_option("--eig-floor", fit_floor, "absolute eigenvalue floor (default 1e-8 * lambda_1)");
    fit->add_flag("--standardize", fit_std, "divide every column by its standard deviation first");

    // calibrate
    CalibrateArgs cal;
    auto* calc = app.add_subcommand("calibrate", "Compute the APC control limit R0");
    calc->add_option("--model,-m", cal.model)->required();
    calc->add_option("--out,-o", cal.output, "calibration json")->required();
    calc->add_option("--gamma", cal.gamma, "EWMA weight")->capture_default_str();
    calc->add_option("--nu", cal.nu, "soft threshold on d")->capture_default_str();
    auto* arl_opt = calc->add_option("--target-arl", cal.target_arl, "in-control ARL (default 200)");
    calc->add_option("--alpha", cal.alpha, "per-step type-I error")->excludes(arl_opt);
    calc->add_option("--mode", cal.mode, "analytic | monte_carlo (default: analytic when p >= 5000)");
    calc->add_option("--variance-mode", cal.variance_mode, "paper | asymptotic | exact")->capture_default_str();
    calc->add_option("--reps", cal.reps, "Monte-Carlo replications")->capture_default_str();
    calc->add_option("--seed", cal.seed)->capture_default_str();
    calc->add_option("--workers", cal.workers, "threads (0 = all cores)")->capture_default_str();

    // monitor
    MonitorArgs mon;
    std::string mon_out;
    auto* monc = app.add_subcommand("monitor", "Run the APC chart over a file of observations");
    monc->add_option("--model,-m", mon.model)->required();
    monc->add_option("--calibration,-c", mon.calibration)->required();
    monc->add_option("input", mon.inputs, "csv files (read as one stream), or image matrices with --image")
        ->required();
    monc->add_flag("--image", mon.image, "input is an image (plain PGM or csv); each row is an observation");
    monc->add_flag("--header", mon.header, "csv input has a header line");
    monc->add_option("--out,-o", mon_out, "chart csv (default: stdout)");
    monc->add_flag("--contributions", mon.contributions, "add per-component (d - nu)_+ columns");

    // diagnose
    DiagnoseArgs dia;
    std::string dia_out;
    auto* diac = app.add_subcommand("diagnose", "Identify the shifted variables in an out-of-control window");
    diac->add_option("--model,-m", dia.model)->required();
    diac->add_option("input", dia.input, "csv or plain PGM of out-of-control observations")->required();
    diac->add_flag("--header", dia.header);
    diac->add_option("--method", dia.method, "pcsr | leb")->capture_default_str();
    diac->add_option("--rows", dia.rows, "1-based inclusive row window a:b (default: all)");
    diac->add_option("--path-points", dia.path_points)->capture_default_str();
    diac->add_option("--decades", dia.decades, "span of the regularization path")->capture_default_str();
    diac->add_option("--bic", dia.bic, "known_variance | profile")->capture_default_str();
    diac->add_flag("--no-refit", dia.no_refit, "score BIC on the lasso estimate instead of the refit");
    diac->add_option("--out,-o", dia_out, "diagnosis json");

    // experiment
    fs::path exp_cfg;
    std::string exp_prefix;
    std::optional<unsigned> exp_workers;
    auto* expc = app.add_subcommand("experiment", "Run a simulation experiment described by a config file");
    expc->add_option("config", exp_cfg)->required();
    expc->add_option("--out-prefix,-o", exp_prefix, "writes <prefix>.csv and <prefix>.json")->required();
    expc->add_option("--workers", exp_workers, "override the config's worker count");

    // synth-image
    SynthArgs syn;
    std::string syn_phase1, syn_model;
    auto* sync = app.add_subcommand("synth-image", "Write the synthetic rolling-process image");
    sync->add_option("--out,-o", syn.output, "image (.pgm or .csv)")->required();
    sync->add_option("--phase1", syn_phase1, "also write in-control training rows (csv)");
    sync->add_option("--model-out", syn_model, "also write the generating (known) model");
    sync->add_option("--seed", syn.seed)->capture_default_str();
    sync->add_option("--depth", syn.depth, "defect depth in noise standard deviations")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitClean : kExitUsage;
    }

    try {
        if (*fit) return cmd_fit(fit_in, fit_out, fit_header, fit_floor, fit_std, out);
        if (*calc) return cmd_calibrate(cal, out);
        if (*monc) {
            if (!mon_out.empty()) mon.output = mon_out;
            return cmd_monitor(mon, out, err);
        }
        if (*diac) {
            if (!dia_out.empty()) dia.output = dia_out;
            return cmd_diagnose(dia, out);
        }
        if (*expc) return cmd_experiment(exp_cfg, exp_prefix, exp_workers, out);
        if (*sync) {
            if (!syn_phase1.empty()) syn.phase1 = syn_phase1;
            if (!syn_model.empty()) syn.model_out = syn_model;
            return cmd_synth_image(syn, out);
        }
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

} // namespace hdspc
