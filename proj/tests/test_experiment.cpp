// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

TEST_CASE("placeholder", "[experiment]") { CHECK(true); }
