#pragma once

// Core library: kernels, tuning, ensembles, the interaction test and the simulation harness.
// Config, dataset, report and cli headers are separate because they pull in nlohmann/json and CLI11.

#include "cvek/ensemble.hpp"
#include "cvek/error.hpp"
#include "cvek/estimator.hpp"
#include "cvek/hypothesis.hpp"
#include "cvek/kernel.hpp"
#include "cvek/parallel.hpp"
#include "cvek/simulation.hpp"
#include "cvek/tuning.hpp"
