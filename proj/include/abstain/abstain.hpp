#pragma once

// Umbrella header: optimal bounded-abstention policies for multi-horizon
// forecasting, with calibration, randomized exact-coverage enforcement,
// brute-force optimality oracles, and a selective-risk evaluation harness.

#include "abstain/apply.hpp"
#include "abstain/calibrate.hpp"
#include "abstain/data.hpp"
#include "abstain/evaluate.hpp"
#include "abstain/forecast.hpp"
#include "abstain/model_io.hpp"
#include "abstain/oracle.hpp"
#include "abstain/risk.hpp"
#include "abstain/rng.hpp"
#include "abstain/series.hpp"
