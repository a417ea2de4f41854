#pragma once

#include "any_problem.hpp"
#include "bench.hpp"
#include "csv.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "levels.hpp"
#include "optimizers.hpp"
#include "presets.hpp"
#include "oracle.hpp"
#include "problems/cso.hpp"
#include "problems/quadratic.hpp"
#include "problems/queue.hpp"
#include "problems/sinkhorn.hpp"
#include "problems/ubsr.hpp"
#include "rng.hpp"
#include "schedule.hpp"
