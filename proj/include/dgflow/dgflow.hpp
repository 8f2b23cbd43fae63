#pragma once

#include "dgflow/grid.hpp"
#include "dgflow/convolution.hpp"
#include "dgflow/functionals.hpp"
#include "dgflow/quadratic.hpp"
#include "dgflow/solvers.hpp"
#include "dgflow/discrete_gradient.hpp"
#include "dgflow/steppers.hpp"
#include "dgflow/flow.hpp"
#include "dgflow/io.hpp"
#include "dgflow/fixtures.hpp"
