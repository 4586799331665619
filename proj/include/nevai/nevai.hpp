#pragma once

#include "nevai/error.hpp"
#include "nevai/expr.hpp"
#include "nevai/families.hpp"
#include "nevai/jacobi.hpp"
#include "nevai/kernel.hpp"
#include "nevai/ope.hpp"
#include "nevai/operator.hpp"
#include "nevai/parallel.hpp"
#include "nevai/quadrature.hpp"
#include "nevai/rng.hpp"
#include "nevai/spectral.hpp"
#include "nevai/test_function.hpp"
