#include "dgflow/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dgflow::cli::main_entry(argc, argv, std::cout, std::cerr); }
