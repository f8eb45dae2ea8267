#include <iostream>

#include "ntkpinn/cli.hpp"

int main(int argc, char** argv) { return ntkpinn::run_cli(argc, argv, std::cout, std::cerr); }
