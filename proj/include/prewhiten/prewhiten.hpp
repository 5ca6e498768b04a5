#pragma once

// Umbrella header for the prewhiten library: spatially varying AR-based
// prewhitening for vertex-wise time-series regression, with autocorrelation
// diagnostics and a simulation harness.

#include "prewhiten/arfit.hpp"
#include "prewhiten/data.hpp"
#include "prewhiten/design.hpp"
#include "prewhiten/error.hpp"
#include "prewhiten/glm.hpp"
#include "prewhiten/parallel.hpp"
#include "prewhiten/pipeline.hpp"
#include "prewhiten/regularize.hpp"
#include "prewhiten/rng.hpp"
#include "prewhiten/sim.hpp"
#include "prewhiten/special.hpp"
#include "prewhiten/stats.hpp"
#include "prewhiten/whiten.hpp"
