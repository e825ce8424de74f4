#include <iostream>

#include "lvcal/cli.hpp"

int main(int argc, char** argv) { return lvcal::run(argc, argv, std::cout, std::cerr); }
