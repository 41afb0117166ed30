#include "gtest/gtest.h"
TEST(Placeholder, sorting_test) {}
