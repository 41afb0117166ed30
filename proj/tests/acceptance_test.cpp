#include "gtest/gtest.h"
TEST(Placeholder, acceptance_test) {}
