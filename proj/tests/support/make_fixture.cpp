// Regenerates the bundled demo fixture: make_fixture <out-dir>
#include <iostream>

#include "scene.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixture <out-dir>\n";
    return 1;
  }
  try {
    afforda::testing::write_demo_fixture(argv[1]);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
