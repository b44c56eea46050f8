#include <iostream>

#include "fpoct/app/commands.hpp"

int main(int argc, char** argv) { return fpoct::app::run_cli(argc, argv, std::cout, std::cerr); }
