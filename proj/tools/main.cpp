#include <iostream>

#include "wreckseg/cli.hpp"

int main(int argc, char** argv) {
    return wreckseg::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
