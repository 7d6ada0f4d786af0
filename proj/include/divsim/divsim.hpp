#pragma once

#include "divsim/config.hpp"
#include "divsim/csr.hpp"
#include "divsim/engine.hpp"
#include "divsim/errors.hpp"
#include "divsim/experiments.hpp"
#include "divsim/metrics.hpp"
#include "divsim/network.hpp"
#include "divsim/random.hpp"
#include "divsim/scenario.hpp"
#include "divsim/scenario_io.hpp"
#include "divsim/simulation.hpp"
#include "divsim/software.hpp"
#include "divsim/stack.hpp"
#include "divsim/vulnerability.hpp"
