#pragma once

#include "bootstrap.hpp"
#include "calibration.hpp"
#include "core_data.hpp"
#include "crossfit.hpp"
#include "errors.hpp"
#include "estimate.hpp"
#include "estimators.hpp"
#include "io.hpp"
#include "isotonic.hpp"
#include "learners.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "simulation.hpp"
