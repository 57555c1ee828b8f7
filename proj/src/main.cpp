#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "juris/cli.hpp"

int main(int argc, char** argv)
{
    spdlog::set_default_logger(spdlog::stderr_color_mt("juris"));
    std::vector<std::string> args(argv + 1, argv + argc);
    auto factory = [](const juris::cli::WorkbenchConfig& cfg) -> std::unique_ptr<juris::cli::Operations> {
        return std::make_unique<juris::cli::ModuleOperations>(cfg);
    };
    return juris::cli::run(args, factory, std::cout, std::cerr);
}
