#include "hdspc/experiment_config.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hdspc {

namespace {

class Reader {
public:
    explicit Reader(const KeyValues& kv) : kv_(kv) {}

    bool has(const std::string& key) {
        used_.insert(key);
        return kv_.count(key) > 0;
    }
    std::string str(const std::string& key, const std::string& fallback) {
        return has(key) ? kv_.at(key) : fallback;
    }
    double num(const std::string& key, double fallback) {
        return has(key) ? parse_double(kv_.at(key), "config key '" + key + "'") : fallback;
    }
    template <class Int>
    Int integer(const std::string& key, Int fallback) {
        if (!has(key)) return fallback;
        const double v = parse_double(kv_.at(key), "config key '" + key + "'");
        if (v != std::floor(v) || v < 0) throw DataError("config key '" + key + "' must be a nonnegative integer");
        return static_cast<Int>(v);
    }
    std::vector<double> list(const std::string& key, std::vector<double> fallback) {
        return has(key) ? parse_double_list(kv_.at(key), "config key '" + key + "'") : fallback;
    }
    std::vector<std::string> words(const std::string& key, std::vector<std::string> fallback) {
        if (!has(key)) return fallback;
        std::vector<std::string> out;
        std::istringstream ss(kv_.at(key));
        std::string w;
        while (std::getline(ss, w, ',')) {
            const auto b = w.find_first_not_of(" \t");
            const auto e = w.find_last_not_of(" \t");
            if (b != std::string::npos) out.push_back(w.substr(b, e - b + 1));
        }
        return out;
    }
    bool flag(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const auto& v = kv_.at(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw DataError("config key '" + key + "' must be true or false");
    }
    void reject_unknown() const {
        for (const auto& [k, v] : kv_)
            if (!used_.count(k)) throw DataError("unknown config key '" + k + "'");
    }

private:
    const KeyValues& kv_;
    std::set<std::string> used_;
};

ScenarioSpec read_scenario(Reader& r) {
    ScenarioSpec s;
    s.kind = parse_scenario_kind(r.str("scenario", to_string(s.kind)));
    s.p = r.integer<Index>("p", s.p);
    s.blocks = r.integer<Index>("blocks", s.blocks);
    s.rho = r.num("rho", s.rho);
    s.wishart_extra_df = r.integer<Index>("wishart_extra_df", s.wishart_extra_df);
    s.seed = r.integer<std::uint64_t>("scenario_seed", s.seed);
    return s;
}

} // namespace

ExperimentPlan parse_experiment(const KeyValues& kv) {
    Reader r(kv);
    ExperimentPlan plan;
    if (!r.has("experiment")) throw DataError("config: missing 'experiment' key");
    plan.kind = r.str("experiment", "");
    try {
        if (plan.kind == "type1") {
            Type1Config base;
            base.kind = parse_type1_kind(r.str("kind", to_string(base.kind)));
            base.nus = r.list("nu", base.nus);
            base.alpha = r.num("alpha", base.alpha);
            base.reps = r.integer<std::size_t>("reps", base.reps);
            base.steps = r.integer<std::int64_t>("steps", base.steps);
            base.gamma = r.num("gamma", base.gamma);
            base.variance_mode = parse_variance_mode(r.str("variance_mode", to_string(base.variance_mode)));
            base.seed = r.integer<std::uint64_t>("seed", base.seed);
            base.workers = r.integer<unsigned>("workers", base.workers);
            for (double p : r.list("p", {static_cast<double>(base.p)})) {
                Type1Config c = base;
                if (p < 1 || p != std::floor(p)) throw DataError("config key 'p' must hold positive integers");
                c.p = static_cast<Index>(p);
                plan.type1.push_back(c);
            }
        } else if (plan.kind == "arl") {
            ArlConfig c;
            c.scenario = read_scenario(r);
            c.scenario.shift_fraction = r.num("shift_fraction", c.scenario.shift_fraction);
            c.methods.clear();
            for (const auto& m : r.words("methods", {"apc", "pca_t2q"})) c.methods.push_back(parse_monitor_method(m));
            c.deltas = r.list("deltas", c.deltas);
            c.target_arl = r.num("target_arl", c.target_arl);
            c.reps = r.integer<std::size_t>("reps", c.reps);
            c.calibration_reps = r.integer<std::size_t>("calibration_reps", c.calibration_reps);
            c.change_time = r.integer<std::int64_t>("change_time", c.change_time);
            c.max_rl_factor = r.num("max_rl_factor", c.max_rl_factor);
            c.apc.gamma = r.num("gamma", c.apc.gamma);
            c.apc.nu = r.num("nu", c.apc.nu);
            c.apc.variance_mode = parse_variance_mode(r.str("variance_mode", to_string(c.apc.variance_mode)));
            c.pca.cpv = r.num("cpv", c.pca.cpv);
            c.pca_calibration_draws = r.integer<std::size_t>("pca_calibration_draws", c.pca_calibration_draws);
            c.seed = r.integer<std::uint64_t>("seed", c.seed);
            c.workers = r.integer<unsigned>("workers", c.workers);
            plan.arl = c;
        } else if (plan.kind == "diagnosis") {
            DiagnosisConfig c;
            c.scenario = read_scenario(r);
            c.methods.clear();
            for (const auto& m : r.words("methods", {"pcsr", "leb"})) c.methods.push_back(parse_diagnosis_method(m));
            c.shift_fractions = r.list("shift_fractions", c.shift_fractions);
            c.deltas = r.list("deltas", c.deltas);
            c.reps = r.integer<std::size_t>("reps", c.reps);
            c.samples = r.integer<Index>("samples", c.samples);
            c.path.points = r.integer<int>("path_points", c.path.points);
            c.path.decades = r.num("decades", c.path.decades);
            const auto bic = r.str("bic", "known_variance");
            if (bic == "known_variance")
                c.path.bic = BicForm::known_variance;
            else if (bic == "profile")
                c.path.bic = BicForm::profile;
            else
                throw DataError("config key 'bic' must be known_variance or profile");
            c.path.refit = r.flag("refit", c.path.refit);
            const auto solver = r.str("solver", "coordinate_descent");
            if (solver == "coordinate_descent" || solver == "cd")
                c.path.lasso.solver = LassoSolver::coordinate_descent;
            else if (solver == "proximal_gradient" || solver == "pg")
                c.path.lasso.solver = LassoSolver::proximal_gradient;
            else
                throw DataError("config key 'solver' must be coordinate_descent or proximal_gradient");
            c.seed = r.integer<std::uint64_t>("seed", c.seed);
            c.workers = r.integer<unsigned>("workers", c.workers);
            plan.diagnosis = c;
        } else {
            throw DataError("config: unknown experiment kind '" + plan.kind + "'");
        }
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("config: ") + e.what());
    }
    r.reject_unknown();
    return plan;
}

ExperimentOutput run_experiment(const ExperimentPlan& plan) {
    ExperimentOutput out;
    if (plan.kind == "type1") {
        std::vector<Type1Result> results;
        out.json = nlohmann::json::array();
        for (const auto& c : plan.type1) {
            results.push_back(run_type1_experiment(c));
            out.json.push_back(to_json(results.back()));
        }
        out.csv = type1_table_csv(results);
    } else if (plan.kind == "arl") {
        const auto rep = run_arl_experiment(*plan.arl);
        out.csv = arl_table_csv(rep);
        out.json = to_json(rep);
    } else if (plan.kind == "diagnosis") {
        const auto rep = run_diagnosis_experiment(*plan.diagnosis);
        out.csv = diagnosis_table_csv(rep);
        out.json = to_json(rep);
    } else {
        throw DataError("unknown experiment kind '" + plan.kind + "'");
    }
    return out;
}

} // namespace hdspc
