#include <string>
#include <vector>

#include "depkit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return depkit::run_cli(std::move(args));
}
