#include "cubflow/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <unistd.h>

int main(int argc, char** argv) {
  cubflow::cli::RunOptions options;
  const char* no_color = std::getenv("NO_COLOR");
  options.color = ::isatty(STDOUT_FILENO) && !(no_color && *no_color);
  return cubflow::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr, options);
}
