#include "gtest/gtest.h"
TEST(Placeholder, harness_test) {}
