#include <iostream>

#include "cvek/cli.hpp"

int main(int argc, char** argv) {
    return cvek::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
