#pragma once

// Umbrella header for the simulation library. harness.hpp and acceptance.hpp
// are not included here because they need OpenSSL at link time.

#include "fragbench/benford.hpp"
#include "fragbench/big_length.hpp"
#include "fragbench/config.hpp"
#include "fragbench/continuous.hpp"
#include "fragbench/discrete.hpp"
#include "fragbench/error.hpp"
#include "fragbench/mellin.hpp"
#include "fragbench/parallel.hpp"
#include "fragbench/rng.hpp"
#include "fragbench/sampling.hpp"
