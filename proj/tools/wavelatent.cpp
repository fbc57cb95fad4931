#include <iostream>

#include "wavelatent/cli.hpp"

int main(int argc, char** argv) { return wavelatent::cli::dispatch(argc, argv, std::cout, std::cerr); }
