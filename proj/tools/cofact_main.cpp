#include <string>
#include <vector>

#include "cofact/cli.hpp"

int main(int argc, char** argv) {
  return cofact::cli_main(std::vector<std::string>(argv, argv + argc));
}
