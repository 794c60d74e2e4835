#include <string>
#include <vector>

#include "simkit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return simkit::cli::run(args);
}
