#include <iostream>

#include "lineage/cli/commands.hpp"

int main(int argc, char** argv) { return lineage::cli::run_cli(argc, argv, std::cout, std::cerr); }
