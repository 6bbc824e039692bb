#include "trialcea/cli.hpp"

#include "trialcea/cea.hpp"
#include "trialcea/comparators.hpp"
#include "trialcea/contrasts.hpp"
#include "trialcea/errors.hpp"
#include "trialcea/reports.hpp"
#include "trialcea/simulate.hpp"
#include "trialcea/textio.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace trialcea::cli {

KGrid parse_k_grid(const std::string& text) {
    std::vector<double> parts;
    std::size_t start = 0;
    while (true) {
        const auto colon = text.find(':', start);
        const auto v = parse_double(std::string_view(text).substr(start, colon - start));
        if (!v) throw InputError("k grid must look like lo:hi:step, got '" + text + "'");
        parts.push_back(*v);
        if (colon == std::string::npos) break;
        start = colon + 1;
    }
    if (parts.size() != 3) throw InputError("k grid must look like lo:hi:step, got '" + text + "'");
    KGrid g{parts[0], parts[1], parts[2]};
    k_grid(g.lo, g.hi, g.step);  // validates
    return g;
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    for (auto& f : split_delimited(s, ',')) {
        const auto a = f.find_first_not_of(" \t"), b = f.find_last_not_of(" \t");
        if (a == std::string::npos) throw InputError("empty name in list '" + s + "'");
        out.push_back(f.substr(a, b - a + 1));
    }
    return out;
}

char parse_delimiter(const std::string& s) {
    if (s == "tab" || s == "\t" || s == "\\t") return '\t';
    if (s.size() == 1) return s[0];
    throw InputError("delimiter must be a single character or 'tab', got '" + s + "'");
}

template <class T>
T get(const nlohmann::json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("config key '") + key + "': " + e.what());
    }
}

std::string one_line(std::string s) {
    for (auto& ch : s)
        if (ch == '\n' || ch == '\r') ch = ' ';
    return s;
}

}  // namespace

RunConfig apply_config(RunConfig c, const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("config must be a JSON object");
    static const std::set<std::string> known{"input", "columns",  "delimiter", "missing_token", "visits",  "bootstrap",
                                             "seed",  "k",        "k_grid",    "mi",            "covariates", "out",
                                             "structure", "level", "n_sims",   "study_mi",      "serial",
                                             "max_iterations"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw InputError("unknown config key '" + key + "'");
    if (j.contains("input")) c.input = get<std::string>(j, "input");
    if (j.contains("columns")) {
        const auto& m = j["columns"];
        if (!m.is_object()) throw InputError("config key 'columns' must be an object");
        for (const auto& [key, value] : m.items()) {
            if (!value.is_string()) throw InputError("column name for '" + key + "' must be a string");
            const auto name = value.get<std::string>();
            if (key == "id") c.schema.id = name;
            else if (key == "arm") c.schema.arm = name;
            else if (key == "time") c.schema.time = name;
            else if (key == "utility" || key == "u") c.schema.utility = name;
            else if (key == "cost" || key == "c") c.schema.cost = name;
            else throw InputError("unknown column role '" + key + "'");
        }
    }
    if (j.contains("delimiter")) c.delimiter = parse_delimiter(get<std::string>(j, "delimiter"));
    if (j.contains("missing_token")) c.schema.missing_token = get<std::string>(j, "missing_token");
    if (j.contains("visits")) {
        if (j["visits"].is_string())
            c.schema.visit_times = parse_double_list(j["visits"].get<std::string>());
        else
            c.schema.visit_times = get<std::vector<double>>(j, "visits");
    }
    if (j.contains("bootstrap")) c.bootstrap = get<std::size_t>(j, "bootstrap");
    if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed");
    if (j.contains("k")) c.k = get<double>(j, "k");
    if (j.contains("k_grid")) {
        const auto& g = j["k_grid"];
        if (g.is_string())
            c.k_grid = parse_k_grid(g.get<std::string>());
        else
            c.k_grid = {get<double>(g, "lo"), get<double>(g, "hi"), get<double>(g, "step")};
    }
    if (j.contains("mi")) c.mi = get<int>(j, "mi");
    if (j.contains("covariates")) {
        if (j["covariates"].is_string())
            c.covariates = split_list(j["covariates"].get<std::string>());
        else
            c.covariates = get<std::vector<std::string>>(j, "covariates");
    }
    if (j.contains("out")) c.out = get<std::string>(j, "out");
    if (j.contains("structure")) c.structure = parse_structure(get<std::string>(j, "structure"));
    if (j.contains("level")) c.level = get<double>(j, "level");
    if (j.contains("n_sims")) c.n_sims = get<int>(j, "n_sims");
    if (j.contains("study_mi")) c.study_mi = get<int>(j, "study_mi");
    if (j.contains("serial")) c.serial = get<bool>(j, "serial");
    if (j.contains("max_iterations")) c.max_iterations = get<int>(j, "max_iterations");
    return c;
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j = {
        {"input", c.input},
        {"columns",
         {{"id", c.schema.id},
          {"arm", c.schema.arm},
          {"time", c.schema.time},
          {"utility", c.schema.utility},
          {"cost", c.schema.cost}}},
        {"missing_token", c.schema.missing_token},
        {"visits", c.schema.visit_times},
        {"bootstrap", c.bootstrap},
        {"seed", c.seed},
        {"k", c.k},
        {"k_grid", {{"lo", c.k_grid.lo}, {"hi", c.k_grid.hi}, {"step", c.k_grid.step}}},
        {"mi", c.mi},
        {"covariates", c.covariates},
        {"out", c.out},
        {"structure", structure_name(c.structure)},
        {"level", c.level},
        {"n_sims", c.n_sims},
        {"study_mi", c.study_mi},
        {"serial", c.serial},
        {"max_iterations", c.max_iterations},
    };
    if (c.delimiter) j["delimiter"] = *c.delimiter == '\t' ? std::string("tab") : std::string(1, *c.delimiter);
    return j;
}

namespace {

std::string read_file(const std::string& path) {
    if (path.empty()) throw InputError("no input file given (use --input)");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const std::string& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("'" + path + "' is not valid JSON: " + e.what());
    }
}

class Run {
public:
    Run(RunConfig c, std::ostream& out, std::ostream& err) : c_(std::move(c)), out_(out), err_(err) {}

    void check() const {
        if (!(c_.level > 0.0 && c_.level < 1.0)) throw InputError("level must lie in (0, 1)");
        if (c_.max_iterations < 1) throw InputError("--max-iterations must be at least 1");
        if (c_.bootstrap < 1) throw InputError("--bootstrap must be at least 1");
        if (c_.mi < 2) throw InputError("--mi must be at least 2");
        if (!(c_.k >= 0.0)) throw InputError("--k must be non-negative");
        k_grid(c_.k_grid.lo, c_.k_grid.hi, c_.k_grid.step);
    }

    void write(const std::string& name, std::string_view contents) {
        const fs::path path = fs::path(c_.out) / name;
        std::error_code ec;
        if (!c_.input.empty() && fs::exists(path) && fs::equivalent(path, c_.input, ec))
            throw InputError("refusing to overwrite the input file '" + c_.input + "'");
        write_file_atomic(path, contents);
        out_ << "wrote " << path.string() << '\n';
    }

    void prepare_output() {
        std::error_code ec;
        fs::create_directories(c_.out, ec);
        if (ec) throw InputError("cannot create output directory '" + c_.out + "': " + ec.message());
        write("config.resolved.json", to_json(c_).dump(2) + "\n");
    }

    TrialDataset load() {
        const auto text = read_file(c_.input);
        auto schema = c_.schema;
        if (c_.delimiter) {
            schema.delimiter = *c_.delimiter;
        } else {
            const auto header = text.substr(0, text.find('\n'));
            schema.delimiter = header.find('\t') != std::string::npos && header.find(',') == std::string::npos ? '\t' : ',';
        }
        schema.covariates = c_.covariates;
        std::istringstream in(text);
        auto data = load_long(in, schema);
        if (c_.schema.visit_times.empty() && !data.subjects.empty())
            warn("no --visits given; assuming visits one year apart");
        const auto warnings = validation_warnings(data);
        constexpr std::size_t kShown = 5;
        for (std::size_t i = 0; i < std::min(kShown, warnings.size()); ++i) warn(warnings[i]);
        if (warnings.size() > kShown)
            warn("... and " + std::to_string(warnings.size() - kShown) + " more data warnings");
        return data;
    }

    void warn(const std::string& what) { err_ << "warning: " << one_line(what) << '\n'; }

    Execution execution() const { return c_.serial ? Execution::Serial : Execution::Parallel; }

    FitOptions fit_options() const {
        FitOptions o;
        o.max_iterations = c_.max_iterations;
        return o;
    }

    MmrmSpec spec(Outcome o) const {
        MmrmSpec s;
        s.outcome = o;
        s.covariance = c_.structure;
        s.extra_covariates = c_.covariates;
        return s;
    }

    TrialDataset analysis_data(const TrialDataset& data) const {
        return c_.covariates.empty() ? data : mean_impute_covariates(data, c_.covariates);
    }

    std::pair<FittedMmrm, FittedMmrm> fit_both(const TrialDataset& data) {
        std::pair<FittedMmrm, FittedMmrm> fits;
        for (Outcome o : {Outcome::Utility, Outcome::Cost}) {
            try {
                (o == Outcome::Utility ? fits.first : fits.second) = fit(data, spec(o), fit_options());
            } catch (const MmrmConvergenceError& e) {
                write("fit_diagnostics.json", nlohmann::json{{"outcome", outcome_name(o)},
                                                             {"message", e.what()},
                                                             {"best_so_far", to_json(e.best_so_far())}}
                                                      .dump(2) +
                                                  "\n");
                throw;
            }
        }
        return fits;
    }

    void describe() {
        check();
        const auto data = load();
        prepare_output();
        if (data.subjects.empty()) warn("input has no subjects; reports are empty");
        const auto patterns = pattern_table(data);
        const auto desc = descriptives(data);
        write("patterns.tsv", pattern_table_delimited(patterns, data.arm_labels, data.n_visits()));
        write("patterns.json", to_json(patterns).dump(2) + "\n");
        write("descriptives.tsv", descriptives_delimited(desc, data.arm_labels, data.visit_times));
        write("descriptives.json", to_json(desc).dump(2) + "\n");
    }

    void fit_cmd() {
        check();
        const auto data = analysis_data(load());
        prepare_output();
        const auto [fu, fc] = fit_both(data);
        write("fit_utility.json", to_json(fu).dump(2) + "\n");
        write("fit_cost.json", to_json(fc).dump(2) + "\n");
        write("coefficients.tsv", coefficient_report(fu, fc, c_.level));
    }

    void cea_cmd() {
        check();
        const auto data = analysis_data(load());
        prepare_output();
        const auto w = qaly_weights(data.visit_times);
        const auto [fu, fc] = fit_both(data);
        BootstrapOptions o;
        o.execution = execution();
        o.fit = fit_options();
        CeaDraws draws;
        try {
            draws = bootstrap_cea(data, spec(Outcome::Utility), spec(Outcome::Cost), w, c_.bootstrap, c_.seed, o);
        } catch (const BootstrapFailure& e) {
            const auto& p = e.partial();
            write("cea_diagnostics.json", nlohmann::json{{"message", e.what()},
                                                         {"replicates", p.n_requested()},
                                                         {"n_failed", p.n_failed},
                                                         {"failed_replicates", p.failed_replicates}}
                                                  .dump(2) +
                                              "\n");
            throw;
        }
        const auto summary = summarize(draws, k_grid(c_.k_grid.lo, c_.k_grid.hi, c_.k_grid.step), c_.k, c_.level);
        const auto plots = render_plots(draws, summary, c_.k);
        write("draws.csv", draws_delimited(draws));
        write("cea_summary.json", to_json(summary).dump(2) + "\n");
        write("cea_report.tsv", cea_report(fu, fc, w, summary, c_.level));
        write("cep.svg", plots.cep_svg);
        write("ceac.svg", plots.ceac_svg);
        if (draws.n_failed) warn(std::to_string(draws.n_failed) + " bootstrap replicates failed and were dropped");
    }

    void compare_cmd() {
        check();
        const auto data = load();
        prepare_output();
        CompareOptions o;
        o.M = c_.mi;
        o.seed = c_.seed;
        o.structure = c_.structure;
        o.covariates = c_.covariates;
        o.level = c_.level;
        o.mi.execution = execution();
        const auto cmp = compare_methods(data, qaly_weights(data.visit_times), o);
        write("comparison.csv", comparison_delimited(cmp));
        write("comparison.json", to_json(cmp).dump(2) + "\n");
    }

    void simulate_cmd(bool seed_given) {
        auto sim = sim_config_from_json(read_json(c_.input));
        if (seed_given) sim.seed = c_.seed;
        validate(sim);
        if (c_.n_sims != 0 && c_.n_sims < 100) throw InputError("--n-sims must be 0 or at least 100");
        prepare_output();
        write("simulation.json", to_json(sim).dump(2) + "\n");
        const auto trial = gen_trial(sim);
        const auto data = apply_mechanism(trial.data, sim.mechanism, sim.seed);
        std::ostringstream csv;
        write_long(csv, data, c_.schema);
        write("simulated.csv", csv.str());
        write("truth.json",
              nlohmann::json{{"delta_qaly", trial.truth.delta_qaly}, {"delta_cost", trial.truth.delta_cost}}.dump(2) +
                  "\n");
        if (c_.n_sims > 0) {
            StudyOptions o;
            o.mi_imputations = c_.study_mi;
            o.level = c_.level;
            o.execution = execution();
            const auto study = bias_study(sim, c_.n_sims, o);
            write("bias_study.csv", bias_report_delimited(study));
        }
    }

    const RunConfig& config() const { return c_; }

private:
    RunConfig c_;
    std::ostream& out_;
    std::ostream& err_;
};

struct Flags {
    std::string config, input, visits, k_grid, covariates, structure, out, delimiter;
    std::size_t bootstrap = 0;
    std::uint64_t seed = 0;
    double k = 0, level = 0;
    int mi = 0, n_sims = 0, study_mi = 0, max_iterations = 0;
    bool serial = false;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Trial-based cost-effectiveness analysis with mixed models for repeated measures", "trialcea"};
    app.require_subcommand(1);
    Flags f;
    std::map<std::string, std::map<std::string, CLI::Option*>> given;  // subcommand → flag → option
    auto shared = [&f](CLI::App* sub) {
        std::map<std::string, CLI::Option*> o;
        o["config"] = sub->add_option("--config", f.config, "JSON run config; flags override it");
        o["input"] = sub->add_option("--input", f.input, "input file (simulate: simulation config JSON)");
        o["visits"] = sub->add_option("--visits", f.visits, "visit times in years, e.g. 0,0.25,0.75");
        o["bootstrap"] = sub->add_option("--bootstrap", f.bootstrap, "bootstrap replicates (10000)");
        o["seed"] = sub->add_option("--seed", f.seed, "master seed");
        o["k"] = sub->add_option("--k", f.k, "highlighted willingness-to-pay threshold (25000)");
        o["k_grid"] = sub->add_option("--k-grid", f.k_grid, "CEAC thresholds lo:hi:step (0:50000:500)");
        o["mi"] = sub->add_option("--mi", f.mi, "number of imputations (50)");
        o["covariates"] = sub->add_option("--covariates", f.covariates, "baseline covariates a,b");
        o["structure"] = sub->add_option("--structure", f.structure, "unstructured | ri-diag | cs");
        o["out"] = sub->add_option("--out", f.out, "output directory");
        o["delimiter"] = sub->add_option("--delimiter", f.delimiter, "input delimiter (default: sniffed)");
        o["level"] = sub->add_option("--level", f.level, "confidence level (0.95)");
        o["n_sims"] = sub->add_option("--n-sims", f.n_sims, "simulate: bias-study replicates");
        o["study_mi"] = sub->add_option("--study-mi", f.study_mi, "simulate: imputations per replicate (20)");
        o["max_iterations"] = sub->add_option("--max-iterations", f.max_iterations, "optimizer cap per fit (500)");
        o["serial"] = sub->add_flag("--serial", f.serial, "run replicate loops serially");
        return o;
    };
    static const std::vector<std::pair<std::string, std::string>> commands{
        {"describe", "missingness patterns and observed means"},
        {"fit", "fit the utility and cost models"},
        {"cea", "bootstrap cost-effectiveness analysis"},
        {"compare", "compare CCA, MI and LMM"},
        {"simulate", "generate a trial (and optionally a bias study) from a simulation config"}};
    std::vector<CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        subs.push_back(app.add_subcommand(name, help));
        given[name] = shared(subs.back());
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kOk;
        }
        err << "error[input]: " << one_line(e.what()) << '\n';
        return kInputError;
    }

    CLI::App* sub = nullptr;
    for (auto* s : subs)
        if (s->parsed()) sub = s;
    const std::string name = sub->get_name();
    auto has = [&](const char* key) { return given.at(name).at(key)->count() > 0; };

    try {
        RunConfig c;
        nlohmann::json file_config = nlohmann::json::object();
        if (has("config")) {
            file_config = read_json(f.config);
            c = apply_config(c, file_config);
        }
        if (has("input")) c.input = f.input;
        if (has("visits")) c.schema.visit_times = parse_double_list(f.visits);
        if (has("bootstrap")) c.bootstrap = f.bootstrap;
        if (has("seed")) c.seed = f.seed;
        if (has("k")) c.k = f.k;
        if (has("k_grid")) c.k_grid = parse_k_grid(f.k_grid);
        if (has("mi")) c.mi = f.mi;
        if (has("covariates")) c.covariates = split_list(f.covariates);
        if (has("structure")) c.structure = parse_structure(f.structure);
        if (has("out")) c.out = f.out;
        if (has("delimiter")) c.delimiter = parse_delimiter(f.delimiter);
        if (has("level")) c.level = f.level;
        if (has("n_sims")) c.n_sims = f.n_sims;
        if (has("study_mi")) c.study_mi = f.study_mi;
        if (has("serial")) c.serial = f.serial;
        if (has("max_iterations")) c.max_iterations = f.max_iterations;

        Run r(c, out, err);
        if (name == "describe") r.describe();
        else if (name == "fit") r.fit_cmd();
        else if (name == "cea") r.cea_cmd();
        else if (name == "compare") r.compare_cmd();
        else r.simulate_cmd(has("seed") || file_config.contains("seed"));
        return kOk;
    } catch (const InputError& e) {
        err << "error[input]: " << one_line(e.what()) << '\n';
        return kInputError;
    } catch (const ConvergenceError& e) {
        err << "error[convergence]: " << one_line(e.what()) << '\n';
        return kConvergenceError;
    } catch (const std::exception& e) {
        err << "error[internal]: " << one_line(e.what()) << '\n';
        return kInternalError;
    } catch (...) {
        err << "error[internal]: unknown exception\n";
        return kInternalError;
    }
}

}  // namespace trialcea::cli
