// Writes full-size synthetic source archives for the dataset contract checks.
#include <fstream>
#include <iostream>

#include "fixtures.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <dir>\n";
    return 2;
  }
  const fs::path root = argv[1];
  if (fs::exists(root / "complete")) return 0;
  fs::create_directories(root);
  fixtures::write_mnist(root / "mnist", 60000, 10000, true, 1, 108);
  fixtures::write_cifar10(root / "cifar", 50000, 10000, 2);
  fixtures::write_dsprites(root / "dsprites.npz", 30000, true, 3);
  fixtures::write_celeba(root / "celeba", {10000, 10000, 10000, 400, 48, 56}, 4);
  std::ofstream(root / "complete") << "ok\n";
  return 0;
}
