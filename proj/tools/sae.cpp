#include <rsae/cli.hpp>

#include <iostream>

int main(int argc, char** argv) { return rsae::run_cli(argc, argv, std::cout, std::cerr); }
