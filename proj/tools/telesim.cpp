#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "telesim/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Wave-variable teleoperation simulator with a lossy channel"};
    app.require_subcommand(1);

    std::string config;
    std::string out;
    bool strict = false;
    auto* run = app.add_subcommand("run", "simulate one scenario and write its trace");
    run->add_option("--config", config, "scenario file")->required();
    run->add_option("--out", out, "trace CSV path; the summary goes next to it")->required();
    run->add_flag("--strict", strict, "fail (exit 2) when any invariant check fails");

    std::string rates;
    std::string out_dir;
    auto* sweep = app.add_subcommand("sweep", "run the scenario once per loss rate");
    sweep->add_option("--config", config, "scenario file")->required();
    sweep->add_option("--rates", rates, "comma-separated loss rates alpha/T")->required();
    sweep->add_option("--out-dir", out_dir, "directory for traces and sweep.csv")->required();

    double alpha = 0.0;
    double period = 10.0;
    int harmonics = 64;
    auto* loss = app.add_subcommand("loss", "tabulate the loss model and its Fourier coefficients");
    loss->add_option("--alpha", alpha, "loss window width, seconds")->required();
    loss->add_option("--period", period, "loss period, seconds")->required();
    loss->add_option("--harmonics", harmonics, "number of harmonics")->required();
    loss->add_option("--out", out, "sample CSV path")->required();

    auto* check = app.add_subcommand("check", "run the invariant suite on a 10 s run");
    check->add_option("--config", config, "scenario file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return telesim::kExitUsage;
    }

    if (*run) {
        return telesim::cmd_run(config, out, strict, std::cout, std::cerr);
    }
    if (*sweep) {
        return telesim::cmd_sweep(config, rates, out_dir, std::cout, std::cerr);
    }
    if (*loss) {
        return telesim::cmd_loss(alpha, period, harmonics, out, std::cout, std::cerr);
    }
    return telesim::cmd_check(config, std::cout, std::cerr);
}
