#include <iostream>

#include "gsculpt/cli.h"

int main(int argc, char** argv) { return gsculpt::RunCli(argc, argv, std::cout, std::cerr); }
