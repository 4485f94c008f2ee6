#include <vector>
#include <string>

#include "salsa/cli.hpp"

int main(int argc, char** argv) {
  return salsa::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
