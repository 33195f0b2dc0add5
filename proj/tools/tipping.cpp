#include <iostream>

#include "tipping/cli.hpp"

int main(int argc, char** argv) { return tipping::cli::dispatch(argc, argv, std::cout, std::cerr); }
