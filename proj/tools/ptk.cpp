// Command-line front end for the batch verification commands.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ptk/cli.hpp"
#include "ptk/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Projective tractor toolkit: batch checks of Killing-type prolongations"};
    app.require_subcommand(1);
    ptk::RunOptions opt;
    std::string report_path;
    bool list = false;
    app.add_flag("--list-geometries", list, "print the catalog and exit");
    for (const auto& name : ptk::command_names()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--geometry", opt.geometries, "catalog name or .json config (repeatable; default: catalog)");
        sub->add_option("--rank", opt.ranks, "rank(s) to check (repeatable; default depends on the command)");
        sub->add_option("--points", opt.points, "sample points per check")->capture_default_str();
        sub->add_option("--loops", opt.loops, "loops for holonomy estimates")->capture_default_str();
        sub->add_option("--steps", opt.steps, "RK4 steps per loop piece; geodesics use twice as many")
            ->capture_default_str();
        sub->add_option("--seed", opt.seed, "random seed")->capture_default_str();
        sub->add_option("--jet-order", opt.jet_order, "jet order of the identity suite")->capture_default_str();
        sub->add_option("--report", report_path, "write one JSON record per line to this file");
        sub->add_option("--tol-scale", opt.tol_scale, "multiply upper tolerances (divide lower bounds)")
            ->capture_default_str();
    }
    app.require_subcommand(0, 1);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (list) {
        for (const auto& n : ptk::catalog_names()) std::cout << n << "\n";
        return 0;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    ptk::RunReport rep;
    try {
        rep = ptk::run_command(command, opt);
    } catch (const ptk::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const ptk::PreconditionError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }
    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::binary);
        if (!out) {
            std::cerr << "cannot write report '" << report_path << "'\n";
            return 2;
        }
        out << rep.jsonl();
    }
    std::cout << rep.summary();
    return ptk::exit_code(rep);
}
