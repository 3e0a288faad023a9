#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

// Dataset root: SCL_DATA_DIR, falling back to ./data/mnist. Empty when the
// files are not present.
inline std::string mnist_dir_or_empty() {
  const char* env = std::getenv("SCL_DATA_DIR");
  const std::string dir = env ? env : "data/mnist";
  if (std::filesystem::exists(dir + "/train-images-idx3-ubyte") ||
      std::filesystem::exists(dir + "/train-images-idx3-ubyte.gz"))
    return dir;
  return {};
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return out;
}
