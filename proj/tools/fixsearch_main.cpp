#include <vector>

#include "fixsearch/cli_run.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fixsearch::cli::run(args);
}
