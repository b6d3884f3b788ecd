#pragma once

#include "moe/benchmark.hpp"
#include "moe/core.hpp"
#include "moe/expert_fit.hpp"
#include "moe/inference.hpp"
#include "moe/io.hpp"
#include "moe/objective.hpp"
#include "moe/rng.hpp"
#include "moe/trainer.hpp"
#include "moe/weight_fit.hpp"
