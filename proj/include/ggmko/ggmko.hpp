#pragma once

// Umbrella header for the library (everything except the CLI commands).

#include "ggmko/baselines.hpp"
#include "ggmko/data.hpp"
#include "ggmko/error.hpp"
#include "ggmko/estimator.hpp"
#include "ggmko/group_pipeline.hpp"
#include "ggmko/numeric.hpp"
#include "ggmko/random.hpp"
#include "ggmko/sequential_testing.hpp"
#include "ggmko/simulation.hpp"
#include "ggmko/version.hpp"
