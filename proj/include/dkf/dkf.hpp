#pragma once

#include "dkf/baselines.hpp"
#include "dkf/core_model.hpp"
#include "dkf/csv.hpp"
#include "dkf/esdkf.hpp"
#include "dkf/expression.hpp"
#include "dkf/linalg.hpp"
#include "dkf/monte_carlo.hpp"
#include "dkf/quantization.hpp"
#include "dkf/rng.hpp"
#include "dkf/scenario.hpp"
#include "dkf/simulation.hpp"
#include "dkf/topology.hpp"
#include "dkf/validate.hpp"
