#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "doctest.h"
#include "statrag/error.hpp"

// Checks that `expr` throws statrag::Error carrying `expected`.
#define CHECK_THROWS_CODE(expr, expected)                          \
  do {                                                             \
    bool thrown_ = false;                                          \
    try {                                                          \
      (void)(expr);                                                \
    } catch (const statrag::Error& e_) {                           \
      thrown_ = true;                                              \
      CHECK_MESSAGE(e_.code() == (expected), e_.what());           \
    }                                                              \
    CHECK_MESSAGE(thrown_, "expected an exception: " #expr);       \
  } while (false)

namespace test {

// Fresh directory under the system temp dir, removed on scope exit.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("statrag_" + tag + "_" + std::to_string(std::rand()) + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace test
