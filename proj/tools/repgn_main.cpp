#include <string>
#include <vector>

#include "repgn/cli.hpp"

int main(int argc, char **argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return repgn::cli::run_command(args);
}
