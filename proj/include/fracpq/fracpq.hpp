#pragma once

// Umbrella header.

#include "fracpq/error.hpp"
#include "fracpq/numerics.hpp"
#include "fracpq/quadrature.hpp"
#include "fracpq/kernels.hpp"
#include "fracpq/grid.hpp"
#include "fracpq/gagliardo.hpp"
#include "fracpq/riesz_gradient.hpp"
#include "fracpq/reaction.hpp"
#include "fracpq/minimize.hpp"
#include "fracpq/frozen.hpp"
#include "fracpq/torsion.hpp"
#include "fracpq/fixed_point.hpp"
#include "fracpq/field_io.hpp"
#include "fracpq/config.hpp"
