#pragma once

#include "icp/box_set.hpp"
#include "icp/bundle.hpp"
#include "icp/errors.hpp"
#include "icp/experiment.hpp"
#include "icp/linalg.hpp"
#include "icp/master.hpp"
#include "icp/oracle.hpp"
#include "icp/schedule.hpp"
#include "icp/solver.hpp"
#include "icp/uc/dual.hpp"
#include "icp/uc/instance.hpp"
#include "icp/uc/unit.hpp"
