#include "aggbounds/cli.hpp"

int main(int argc, char** argv) {
  return aggbounds::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
