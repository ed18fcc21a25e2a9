#pragma once

// Umbrella header.

#include "cqm/analytic.hpp"
#include "cqm/archive.hpp"
#include "cqm/calibration.hpp"
#include "cqm/config.hpp"
#include "cqm/core.hpp"
#include "cqm/digest.hpp"
#include "cqm/ensemble.hpp"
#include "cqm/estimators.hpp"
#include "cqm/gcr.hpp"
#include "cqm/monte_carlo.hpp"
#include "cqm/pipeline.hpp"
#include "cqm/rng.hpp"
#include "cqm/statistics.hpp"
#include "cqm/trajectory.hpp"
