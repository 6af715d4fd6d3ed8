#include <iostream>

#include "promptforge/harness.hpp"

int main(int argc, char** argv) { return promptforge::cli_main(argc, argv, std::cout, std::cerr); }
