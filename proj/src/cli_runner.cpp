#include "wicklab/cli_runner.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "wicklab/bound_lab.hpp"
#include "wicklab/cluster_graph.hpp"
#include "wicklab/convergence_lab.hpp"
#include "wicklab/covariance.hpp"
#include "wicklab/test_function.hpp"

namespace wicklab {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos)
        return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> k = {
        {"model", {"kind", "alpha", "scaling", "mollifier"}},
        {"sweep",
         {"families", "K", "m", "r", "theta_max", "theta_step", "eps", "seed",
          "leg_cap"}},
        {"converge",
         {"f", "m", "kappa", "n", "replicates", "eps", "lambda", "origin",
          "spacing", "extent", "center", "seed", "jobs"}},
        {"sandwich", {"eps", "separations"}},
        {"reduce", {"file"}},
    };
    return k;
}

// Unknown keys surface only for the sections a subcommand reads, so one
// config file can drive several subcommands.
void check_keys(const ConfigDoc& doc, const std::vector<std::string>& sections) {
    for (const std::string& sec : sections) {
        auto it = doc.sections.find(sec);
        if (it == doc.sections.end())
            continue;
        const std::set<std::string>& allowed = known_keys().at(sec);
        for (const auto& kv : it->second)
            if (!allowed.count(kv.first))
                throw std::invalid_argument("[" + sec + "] " + kv.first +
                                            ": unknown key");
    }
}

double parse_double(const std::string& sec, const std::string& key,
                    const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size())
            throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("[" + sec + "] " + key +
                                    ": not a number: '" + value + "'");
    }
}

long parse_long(const std::string& sec, const std::string& key,
                const std::string& value) {
    try {
        std::size_t used = 0;
        long v = std::stol(value, &used);
        if (used != value.size())
            throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("[" + sec + "] " + key +
                                    ": not an integer: '" + value + "'");
    }
}

std::vector<std::string> split_list(const std::string& value) {
    std::istringstream is(value);
    std::vector<std::string> out;
    for (std::string tok; is >> tok;)
        out.push_back(tok);
    return out;
}

double get_double(const ConfigDoc& doc, const std::string& sec,
                  const std::string& key, double fallback) {
    if (!doc.has(sec, key))
        return fallback;
    return parse_double(sec, key, doc.require(sec, key));
}

int get_int(const ConfigDoc& doc, const std::string& sec,
            const std::string& key, int fallback) {
    if (!doc.has(sec, key))
        return fallback;
    return static_cast<int>(parse_long(sec, key, doc.require(sec, key)));
}

std::vector<double> get_list(const ConfigDoc& doc, const std::string& sec,
                             const std::string& key,
                             std::vector<double> fallback) {
    if (!doc.has(sec, key))
        return fallback;
    std::vector<double> out;
    for (const std::string& tok : split_list(doc.require(sec, key)))
        out.push_back(parse_double(sec, key, tok));
    return out;
}

struct ModelParts {
    CovarianceModel base;
    TestFunction rho;
};

ModelParts model_from_config(const ConfigDoc& doc) {
    std::string kind = doc.has("model", "kind") ? doc.require("model", "kind")
                                                : "fractional";
    if (kind != "fractional")
        throw std::invalid_argument("[model] kind: unknown kind '" + kind +
                                    "' (use fractional)");
    double alpha = get_double(doc, "model", "alpha", 0.5);
    std::vector<double> sv = get_list(doc, "model", "scaling", {1.0});
    Scaling s(sv);
    std::string moll = doc.has("model", "mollifier")
                           ? doc.require("model", "mollifier")
                           : "bump";
    ModelParts parts{fractional_covariance(alpha, s), TestFunction{}};
    if (moll == "bump")
        parts.rho = bump_mollifier(s);
    else if (moll == "triangle")
        parts.rho = triangle_mollifier(s);
    else
        throw std::invalid_argument("[model] mollifier: unknown mollifier '" +
                                    moll + "' (use bump or triangle)");
    return parts;
}

std::uint64_t need_seed(const RunConfig& run, const ConfigDoc& doc,
                        const std::string& sec) {
    if (run.seed)
        return *run.seed;
    if (doc.has(sec, "seed"))
        return static_cast<std::uint64_t>(
            parse_long(sec, "seed", doc.require(sec, "seed")));
    throw std::invalid_argument("seed is required: set seed in [" + sec +
                                "] or pass --seed");
}

// Create (if missing) and probe the output directory before any expensive
// work; an unwritable directory is a configuration error, not a check
// failure.
void prepare_out_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    fs::path probe = fs::path(dir) / ".write_probe";
    std::ofstream os(probe);
    os << "x";
    bool ok = os.good();
    os.close();
    fs::remove(probe, ec);
    if (!ok)
        throw std::invalid_argument("output directory not writable: " + dir);
}

std::string out_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

NonlinearityF parse_nonlinearity(const std::string& tok) {
    if (tok == "abs")
        return abs_nonlinearity();
    if (tok.size() > 2 && tok[0] == 'x' && tok[1] == '^') {
        std::string num = tok.substr(2);
        if (!num.empty() &&
            num.find_first_not_of("0123456789") == std::string::npos)
            return power_nonlinearity(std::stoi(num));
    }
    throw std::invalid_argument("[converge] f: unknown nonlinearity '" + tok +
                                "' (use x^N or abs)");
}

std::string file_tag(const std::string& name) {
    std::string out;
    for (char c : name)
        if (std::isalnum(static_cast<unsigned char>(c)))
            out.push_back(c);
    return out.empty() ? "f" : out;
}

void print_certificates(const std::vector<RewriteCertificate>& certs) {
    int step = 0;
    for (const RewriteCertificate& c : certs) {
        std::ostringstream before, after;
        for (int d : c.degrees_before)
            before << d << " ";
        for (int d : c.degrees_after)
            after << d << " ";
        std::printf("  step %d  %-14s factor %.9g (worst %.9g)  "
                    "value %.9g <= %.9g  degrees %s-> %s\n",
                    ++step, c.kind.c_str(), c.factor, c.worst_factor,
                    c.value_before, c.factor * c.value_after,
                    before.str().c_str(), after.str().c_str());
    }
    if (certs.empty())
        std::printf("  no steps\n");
}

} // namespace

bool ConfigDoc::has(const std::string& section, const std::string& key) const {
    auto it = sections.find(section);
    return it != sections.end() && it->second.count(key) > 0;
}

const std::string& ConfigDoc::require(const std::string& section,
                                      const std::string& key) const {
    auto it = sections.find(section);
    if (it == sections.end() || !it->second.count(key))
        throw std::invalid_argument("[" + section + "] " + key + ": missing");
    return it->second.at(key);
}

ConfigDoc parse_config_text(const std::string& text) {
    ConfigDoc doc;
    std::istringstream is(text);
    std::string section;
    int lineno = 0;
    for (std::string raw; std::getline(is, raw);) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';')
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument(
                    "config line " + std::to_string(lineno) +
                    ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!known_keys().count(section))
                throw std::invalid_argument("config line " +
                                            std::to_string(lineno) +
                                            ": unknown section [" + section +
                                            "]");
            doc.sections[section]; // a section may stay empty
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " +
                                        std::to_string(lineno) +
                                        ": expected key = value");
        if (section.empty())
            throw std::invalid_argument("config line " +
                                        std::to_string(lineno) +
                                        ": key before any [section]");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " +
                                        std::to_string(lineno) +
                                        ": empty key");
        doc.sections[section][key] = value;
    }
    return doc;
}

ConfigDoc parse_config_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::invalid_argument("cannot open config file: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return parse_config_text(os.str());
}

int cmd_bound_sweep(const RunConfig& run) {
    ConfigDoc doc = parse_config_file(run.config_path);
    check_keys(doc, {"model", "sweep"});
    ModelParts parts = model_from_config(doc);
    if (parts.base.scaling.dim() != 1)
        throw std::invalid_argument("bound-sweep: geometry families are 1-d");
    prepare_out_dir(run.out_dir);

    BoundSweepConfig bc;
    CovarianceModel base = parts.base;
    TestFunction rho = parts.rho;
    bc.model_for_eps = [base, rho](double e) {
        return mollified_covariance(base, rho, e);
    };
    if (doc.has("sweep", "families"))
        bc.families = split_list(doc.require("sweep", "families"));
    bc.K = get_int(doc, "sweep", "K", 2);
    bc.m = get_int(doc, "sweep", "m", 1);
    bc.r = get_int(doc, "sweep", "r", 0);
    bc.leg_cap = get_int(doc, "sweep", "leg_cap", 0);
    bc.eps_list = get_list(doc, "sweep", "eps", {0.25, 0.125, 0.0625});
    bc.seed = need_seed(run, doc, "sweep");

    double theta_max = run.theta_max
                           ? *run.theta_max
                           : get_double(doc, "sweep", "theta_max", 5.0);
    double theta_step = get_double(doc, "sweep", "theta_step", 0.25);
    if (!(theta_step > 0.0) || !(theta_max >= 0.0))
        throw std::invalid_argument(
            "[sweep] theta grid: need theta_step > 0 and theta_max >= 0");
    // Fixed step: a larger theta_max extends the grid without moving the
    // points below it, so the fitted constant is comparable across ranges.
    for (double t = 0.0; t <= theta_max + 1e-12; t += theta_step)
        bc.thetas.push_back(t);

    BoundReport rep = ratio_sweep(bc);
    write_bound_csv(rep, out_path(run.out_dir, "bound_cells.csv"));
    write_bound_summary_json(rep, out_path(run.out_dir, "bound_summary.json"));

    for (const std::string& note : rep.notes)
        std::printf("%s\n", note.c_str());
    std::printf("fitted constant %.9g  (sup ratio near %.9g, far %.9g)\n",
                rep.fitted_constant, rep.sup_ratio_near, rep.sup_ratio_far);

    if (rep.falsified) {
        for (const BoundCell& c : rep.cells)
            if (!std::isfinite(c.ratio))
                std::printf("bound falsified: family %s eps %.9g theta %.9g "
                            "lhs %.9g rhs %.9g\n",
                            c.family.c_str(), c.eps, c.theta, c.lhs, c.rhs);
        std::printf("bound-sweep: FAIL\n");
        return 2;
    }
    // theta-uniformity: the ratio must not grow into the far-theta range
    if (rep.sup_ratio_far > rep.sup_ratio_near * (1.0 + 1e-9)) {
        std::printf("theta-uniformity violated: far sup %.9g exceeds near "
                    "sup %.9g\nbound-sweep: FAIL\n",
                    rep.sup_ratio_far, rep.sup_ratio_near);
        return 2;
    }
    std::printf("bound-sweep: PASS\n");
    return 0;
}

int cmd_reduce_demo(const RunConfig& run) {
    std::string path = run.graph_path;
    if (path.empty() && !run.config_path.empty()) {
        ConfigDoc doc = parse_config_file(run.config_path);
        check_keys(doc, {"reduce"});
        path = doc.require("reduce", "file");
    }
    if (path.empty())
        throw std::invalid_argument(
            "reduce-demo: give a graph file (positional or [reduce] file)");

    GraphBundle b = read_graph_file(path);
    std::printf("graph: K %d, m %d, blocks %d, total degree %d\n",
                b.graph.K(), b.m, static_cast<int>(b.clustering.blocks.size()),
                b.graph.total_degree());

    std::string why;
    if (!admissible_support(b.graph, b.clustering, b.m, &why))
        throw std::invalid_argument("reduce-demo: graph not admissible: " +
                                    why);

    RewriteResult red = reduce_graph(b.graph, b.clustering, b.m, b.gv);
    std::printf("reduction (%d steps):\n",
                static_cast<int>(red.certificates.size()));
    print_certificates(red.certificates);

    OmegaStarReport star = omega_star_member(red.graph, b.clustering, b.m);
    if (!star.member) {
        for (const std::string& v : star.violations)
            std::printf("  minimality violated: %s\n", v.c_str());
        std::printf("reduce-demo: FAIL\n");
        return 2;
    }

    RewriteResult enh = enhance_graph(red.graph, b.clustering, b.m, b.gv);
    std::printf("enhancement (%d steps):\n",
                static_cast<int>(enh.certificates.size()));
    print_certificates(enh.certificates);

    std::ostringstream deg;
    bool degrees_ok = true;
    for (int v = 0; v < enh.graph.K(); ++v) {
        int d = enh.graph.degree(v);
        deg << d << " ";
        if (d != b.m && d != b.m + 1)
            degrees_ok = false;
    }
    std::printf("final degrees: %s(target %d or %d)\n", deg.str().c_str(),
                b.m, b.m + 1);
    std::printf("total certified factor %.9g\n",
                red.total_factor * enh.total_factor);
    if (!degrees_ok) {
        std::printf("reduce-demo: FAIL\n");
        return 2;
    }
    std::printf("reduce-demo: PASS\n");
    return 0;
}

int cmd_converge(const RunConfig& run) {
    ConfigDoc doc = parse_config_file(run.config_path);
    check_keys(doc, {"model", "converge"});
    ModelParts parts = model_from_config(doc);
    prepare_out_dir(run.out_dir);

    std::vector<std::string> fs =
        split_list(doc.has("converge", "f") ? doc.require("converge", "f")
                                            : "abs");
    if (fs.empty())
        throw std::invalid_argument("[converge] f: empty list");

    std::uint64_t seed = need_seed(run, doc, "converge");
    int m = get_int(doc, "converge", "m", 2);

    bool all_positive = true;
    for (const std::string& tok : fs) {
        ConvergenceConfig cfg =
            default_convergence_config(parse_nonlinearity(tok),
                                       parts.base.alpha, m);
        cfg.base = parts.base;
        cfg.rho = parts.rho;
        cfg.kappa = get_double(doc, "converge", "kappa", cfg.kappa);
        cfg.n = get_int(doc, "converge", "n", cfg.n);
        cfg.replicates =
            get_int(doc, "converge", "replicates", cfg.replicates);
        cfg.eps_list = get_list(doc, "converge", "eps", cfg.eps_list);
        cfg.lambdas = get_list(doc, "converge", "lambda", cfg.lambdas);
        cfg.grid.origin = {
            get_double(doc, "converge", "origin", cfg.grid.origin[0])};
        cfg.grid.spacing = {
            get_double(doc, "converge", "spacing", cfg.grid.spacing[0])};
        cfg.grid.extent = {
            get_int(doc, "converge", "extent",
                    static_cast<int>(cfg.grid.extent[0]))};
        cfg.center = {
            get_double(doc, "converge", "center", cfg.center[0])};
        cfg.seed = seed;
        cfg.jobs = run.jobs ? *run.jobs : get_int(doc, "converge", "jobs", 1);

        ConvergenceReport rep = convergence_error(cfg);
        std::string tag = file_tag(rep.f_name);
        write_convergence_csv(rep,
                              out_path(run.out_dir, "converge_" + tag + ".csv"));
        write_convergence_summary_json(
            rep, out_path(run.out_dir, "converge_" + tag + ".json"));

        std::printf("F %-6s a_m %.9g sigma2 %.9g\n", rep.f_name.c_str(),
                    rep.a_m, rep.sigma2);
        for (std::size_t l = 0; l < rep.eps_slopes.size(); ++l) {
            const SlopeFit& f = rep.eps_slopes[l];
            std::printf("  lambda %-9g eps-slope %.4f  95%% [%.4f, %.4f]\n",
                        rep.lambdas[l], f.slope, f.lo95, f.hi95);
            if (!(f.lo95 > 0.0))
                all_positive = false;
        }
        std::printf("  rate-threshold flag (kappa/2 = %.4g): %s\n",
                    0.5 * cfg.kappa, rep.pass ? "met" : "not met");
    }
    if (!all_positive) {
        std::printf("converge: FAIL (an eps-slope interval touches zero)\n");
        return 2;
    }
    std::printf("converge: PASS\n");
    return 0;
}

int cmd_sandwich_check(const RunConfig& run) {
    ConfigDoc doc = parse_config_file(run.config_path);
    check_keys(doc, {"model", "sandwich"});
    ModelParts parts = model_from_config(doc);
    prepare_out_dir(run.out_dir);

    double eps = get_double(doc, "sandwich", "eps", 0.0);
    if (!(eps > 0.0) || eps > 1.0)
        throw std::invalid_argument(
            "[sandwich] eps: need a mollification scale in (0, 1]");
    CovarianceModel model = mollified_covariance(parts.base, parts.rho, eps);
    std::vector<double> seps = get_list(doc, "sandwich", "separations", {});
    SandwichReport rep = sandwich_check(model, seps);

    nlohmann::json j;
    j["kind"] = model.kind;
    j["alpha"] = model.alpha;
    j["eps"] = eps;
    j["lambda_fit"] = rep.lambda_fit;
    j["worst_separation"] = rep.worst_separation;
    j["pass"] = rep.pass;
    std::ofstream os(out_path(run.out_dir, "sandwich.json"),
                     std::ios::binary);
    os << j.dump(2) << "\n";
    if (!os.good())
        throw std::invalid_argument("cannot write sandwich.json in " +
                                    run.out_dir);

    std::printf("lambda_fit %.9g at separation %.9g\n", rep.lambda_fit,
                rep.worst_separation);
    if (!rep.pass) {
        std::printf("sandwich-check: FAIL (declared lambda exceeded)\n");
        return 2;
    }
    std::printf("sandwich-check: PASS\n");
    return 0;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Gaussian-chaos bound and convergence experiments"};
    app.require_subcommand(1);

    RunConfig run;
    std::uint64_t seed_val = 0;
    int jobs_val = 1;
    double theta_max_val = 0.0;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        CLI::Option* c = sub->add_option("--config", run.config_path,
                                         "config file (key = value stanzas)");
        if (config_required)
            c->required();
        sub->add_option("--out", run.out_dir, "output directory");
        sub->add_option("--seed", seed_val, "seed override");
        sub->add_option("--jobs", jobs_val, "worker threads");
        return sub;
    };

    CLI::App* sweep = add_common(
        app.add_subcommand("bound-sweep",
                           "exact-vs-envelope ratio sweep over fixtures"),
        true);
    sweep->add_option("--theta-max", theta_max_val,
                      "extend the theta grid to this value");

    CLI::App* reduce = app.add_subcommand(
        "reduce-demo", "rewrite a pairing graph with certificates");
    reduce->add_option("graph", run.graph_path, "graph bundle file");
    add_common(reduce, false);

    add_common(app.add_subcommand(
                   "converge", "renormalized-error convergence experiment"),
               true);
    add_common(app.add_subcommand("sandwich-check",
                                  "fit the two-sided envelope constant"),
               true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    run.subcommand = sub->get_name();
    if (sub->count("--seed"))
        run.seed = seed_val;
    if (sub->count("--jobs"))
        run.jobs = jobs_val;
    if (sub->get_option_no_throw("--theta-max") &&
        sub->count("--theta-max"))
        run.theta_max = theta_max_val;

    try {
        if (run.subcommand == "bound-sweep")
            return cmd_bound_sweep(run);
        if (run.subcommand == "reduce-demo")
            return cmd_reduce_demo(run);
        if (run.subcommand == "converge")
            return cmd_converge(run);
        return cmd_sandwich_check(run);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "check failed: %s\n", e.what());
        return 2;
    }
}

} // namespace wicklab
