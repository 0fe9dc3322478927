#pragma once

#include "sidx/core_data.hpp"
#include "sidx/lpe.hpp"
#include "sidx/sphere_lattice.hpp"
#include "sidx/aggregation.hpp"
#include "sidx/simbench.hpp"
#include "sidx/report.hpp"
