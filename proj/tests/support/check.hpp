#pragma once

#include <filesystem>
#include <string>

#include "afforda/error.hpp"
#include "doctest.h"

// Asserts that expr throws afforda::Error with the given code.
#define CHECK_ERRC(expr, errc)                                         \
  do {                                                                 \
    bool thrown_ = false;                                              \
    try {                                                              \
      (void)(expr);                                                    \
    } catch (const afforda::Error& e_) {                               \
      thrown_ = true;                                                  \
      CHECK_MESSAGE(e_.code() == (errc), e_.what());                   \
    }                                                                  \
    CHECK_MESSAGE(thrown_, "expected afforda::Error from " #expr);     \
  } while (0)

namespace afforda::testing {

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("afforda_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace afforda::testing
