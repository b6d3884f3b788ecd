#include <catch2/catch_amalgamated.hpp>
#include "moe/moe.hpp"
