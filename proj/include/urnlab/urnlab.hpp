#pragma once

#include "urnlab/error.hpp"
#include "urnlab/estimators.hpp"
#include "urnlab/experiment.hpp"
#include "urnlab/io.hpp"
#include "urnlab/prob.hpp"
#include "urnlab/rng.hpp"
#include "urnlab/search.hpp"
#include "urnlab/simulators.hpp"
