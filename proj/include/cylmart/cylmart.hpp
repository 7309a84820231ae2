#pragma once

/// Umbrella header for the whole library.

#include "cylmart/errors.hpp"
#include "cylmart/grid_measures.hpp"
#include "cylmart/operator_core.hpp"
#include "cylmart/rng.hpp"
#include "cylmart/parallel.hpp"
#include "cylmart/report.hpp"
#include "cylmart/mart_sim.hpp"
#include "cylmart/stoch_integral.hpp"
#include "cylmart/time_change.hpp"
#include "cylmart/gamma_norms.hpp"
#include "cylmart/ito_bdg.hpp"
#include "cylmart/see_solver.hpp"
#include "cylmart/io.hpp"
#include "cylmart/harness.hpp"
#include "cylmart/experiments.hpp"
