// Command-line front end: run configured studies, reproduce the named
// convergence suites, recompute rates from a data file, dump meshes.
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dpg/studies.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dpg::StudyIOError("cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int cmd_run(const std::string& config_path, const std::string& out, long budget, bool quiet) {
    dpg::StudyConfig cfg = dpg::parse_config(read_file(config_path));
    if (!out.empty()) cfg.out_dir = out;
    if (budget > 0) cfg.afem.dof_budget = std::min(cfg.afem.dof_budget, budget);
    dpg::AfemResult result = dpg::run_study(cfg, quiet);
    if (!quiet)
        std::cerr << "[" << cfg.name << "] done, " << result.records.size() << " iterations\n";
    return 0;
}

int cmd_reproduce(const std::string& suite, const std::string& out, long budget, bool quiet) {
    auto res = dpg::reproduce_suite(suite, out.empty() ? "out" : out, budget, quiet);
    bool ok = true;
    for (const auto& r : res) ok = ok && r.pass;
    return ok ? 0 : 1;
}

int cmd_rates(const std::string& dat_path) {
    std::ifstream in(dat_path);
    if (!in) throw dpg::StudyIOError("cannot read " + dat_path);
    std::string header;
    std::getline(in, header);
    std::vector<dpg::ConvergenceRecord> recs;
    long dof;
    double a, e, b, en, h;
    while (in >> dof >> a >> e >> b >> en >> h) {
        dpg::ConvergenceRecord r;
        r.dof = dof;
        r.abs_error = a;
        r.eta = e;
        r.eta_jump = b;
        r.energy_err = en;
        r.hot = h;
        recs.push_back(r);
    }
    dpg::detail::write_rates(std::cout, recs);
    return 0;
}

int cmd_dump_mesh(const std::string& config_path) {
    dpg::StudyConfig cfg = dpg::parse_config(read_file(config_path));
    dpg::Mesh mesh = dpg::build_domain(cfg.afem.domain);
    for (int i = 0; i < cfg.afem.initial_uniform; ++i) mesh = dpg::refine_uniform(mesh);
    mesh.dump(std::cout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DPG eigenvalue convergence studies"};
    app.require_subcommand(1);

    std::string out_dir, path;
    long budget = 0;
    bool quiet = false;
    app.add_option("--out", out_dir, "output directory override");
    app.add_option("--budget", budget, "cap the DoF budget of every study");
    app.add_flag("--quiet", quiet, "suppress progress output");

    auto* run = app.add_subcommand("run", "run a study from a config file");
    run->fallthrough();
    std::string run_config;
    run->add_option("config", run_config, "INI config file")->required();

    auto* rep = app.add_subcommand("reproduce", "run a named convergence suite");
    rep->fallthrough();
    std::string suite;
    rep->add_option("suite", suite, "square|lshape_ev1|lshape_ev5|slit|hot|efficiency")
        ->required();

    auto* rates = app.add_subcommand("rates", "recompute slopes from a .dat file");
    rates->fallthrough();
    std::string dat_path;
    rates->add_option("datfile", dat_path, "data table written by `run`")->required();

    auto* dump = app.add_subcommand("dump-mesh", "print the initial mesh of a config");
    dump->fallthrough();
    std::string dump_config;
    dump->add_option("config", dump_config, "INI config file")->required();

    try {
        app.parse(argc, argv);
        if (run->parsed()) return cmd_run(run_config, out_dir, budget, quiet);
        if (rep->parsed()) return cmd_reproduce(suite, out_dir, budget, quiet);
        if (rates->parsed()) return cmd_rates(dat_path);
        if (dump->parsed()) return cmd_dump_mesh(dump_config);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const dpg::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const dpg::StudyIOError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
