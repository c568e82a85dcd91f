#include <vector>

#include "odekws/cli.hpp"

int main(int argc, char** argv) {
    return odekws::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
