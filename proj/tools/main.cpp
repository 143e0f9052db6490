#include <string>
#include <vector>

#include "edr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return edr::run_cli(args);
}
