#pragma once

// Umbrella header.

#include "chfkit/checkpoint.hpp"
#include "chfkit/cvae.hpp"
#include "chfkit/dataset.hpp"
#include "chfkit/dnn.hpp"
#include "chfkit/errors.hpp"
#include "chfkit/hull.hpp"
#include "chfkit/metrics.hpp"
#include "chfkit/nn.hpp"
#include "chfkit/pipeline.hpp"
#include "chfkit/rng.hpp"
#include "chfkit/svg.hpp"
#include "chfkit/version.hpp"
