// Writes the stock simulation designs to data/presets/exercise{1,2,3}.json.
// Run from the repository root (or pass the target directory).

#include "aggbounds/io.hpp"
#include "aggbounds/simlab.hpp"

#include <iostream>
#include <string>

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "data/presets";
  for (int id = 1; id <= 3; ++id) {
    const auto spec = aggbounds::sim::exercise_preset(id);
    const std::string path = dir + "/exercise" + std::to_string(id) + ".json";
    aggbounds::io::write_json_file(path, aggbounds::io::spec_to_json(spec));
    std::cout << path << "\n";
  }
  return 0;
}
