#include "doctest.h"
TEST_CASE("placeholder test_harness") { CHECK(true); }
