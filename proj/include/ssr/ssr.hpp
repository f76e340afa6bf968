#pragma once

// Umbrella header for the spectral super-resolution library.

#include "ssr/baselines.hpp"
#include "ssr/common.hpp"
#include "ssr/data.hpp"
#include "ssr/metrics.hpp"
#include "ssr/network.hpp"
#include "ssr/ops.hpp"
#include "ssr/pipeline.hpp"
#include "ssr/rng.hpp"
#include "ssr/tape.hpp"
#include "ssr/tensor.hpp"
#include "ssr/training.hpp"
