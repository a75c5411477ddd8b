#include <iostream>

#include "clarinet/cli.hpp"

int main(int argc, char** argv) { return clarinet::cli::run(argc, argv, std::cout, std::cerr); }
