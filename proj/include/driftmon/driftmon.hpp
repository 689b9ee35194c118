#pragma once

// Umbrella header: label-budgeted online monitoring of deployed classifiers
// under drift — streams, detectors, query policies, concentration bounds,
// risk metrics, and the experiment harness.

#include "driftmon/bounds.hpp"
#include "driftmon/config.hpp"
#include "driftmon/detector.hpp"
#include "driftmon/errors.hpp"
#include "driftmon/harness.hpp"
#include "driftmon/policy.hpp"
#include "driftmon/risk.hpp"
#include "driftmon/rng.hpp"
#include "driftmon/stream.hpp"
