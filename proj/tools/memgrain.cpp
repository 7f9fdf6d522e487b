#include <iostream>
#include <string>
#include <vector>

#include "memgrain/cli.hpp"

int main(int argc, char** argv, char** envp) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return memgrain::run_cli(args, std::cout, std::cerr, memgrain::CliEnvironment::from_process(envp));
}
