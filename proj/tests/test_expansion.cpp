#include "doctest.h"
TEST_CASE("placeholder test_expansion") { CHECK(true); }
