#pragma once

#include "core.hpp"
#include "reference_element.hpp"
#include "transfinite.hpp"
#include "mesh.hpp"
#include "levelset.hpp"
#include "quadrature.hpp"
#include "reconstruction.hpp"
#include "decomposition.hpp"
#include "convergence.hpp"
