#pragma once

#include "sdot/core.hpp"
#include "sdot/dual.hpp"
#include "sdot/functionals.hpp"
#include "sdot/geometry.hpp"
#include "sdot/inference.hpp"
#include "sdot/measure.hpp"
#include "sdot/quadrature.hpp"
#include "sdot/random.hpp"
#include "sdot/stats.hpp"
