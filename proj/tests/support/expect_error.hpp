#pragma once

#include <gtest/gtest.h>

#include "proxyrank/error.hpp"

// Asserts that `stmt` throws proxyrank::Error with the given code.
#define EXPECT_ERROR_CODE(stmt, expected)                                                       \
  do {                                                                                          \
    try {                                                                                       \
      stmt;                                                                                     \
      ADD_FAILURE() << "expected " << proxyrank::to_string(expected) << ", nothing was thrown"; \
    } catch (const proxyrank::Error& e_) {                                                      \
      EXPECT_EQ(e_.code(), expected) << e_.what();                                              \
    }                                                                                           \
  } while (0)
