#include "htdsm/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return htdsm::dispatch(argc, argv, std::cout, std::cerr);
}
