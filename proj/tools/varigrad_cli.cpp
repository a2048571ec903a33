#include <iostream>

#include "varigrad/commands.hpp"

int main(int argc, char** argv) {
    return varigrad::run_cli(argc, argv, std::cout, std::cerr);
}
