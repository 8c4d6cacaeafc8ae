#pragma once

#include "bmpc/condensed.hpp"
#include "bmpc/lqr_scan.hpp"
#include "bmpc/problem.hpp"
#include "bmpc/riccati.hpp"
#include "bmpc/scan.hpp"
#include "bmpc/scenarios.hpp"
#include "bmpc/serialization.hpp"
#include "bmpc/solver.hpp"
#include "bmpc/tree.hpp"
#include "bmpc/types.hpp"
#include "bmpc/unicycle.hpp"
