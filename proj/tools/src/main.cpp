#include <iostream>

#include "patchstyle/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return patchstyle::run_cli(args, std::cout, std::cerr);
}
