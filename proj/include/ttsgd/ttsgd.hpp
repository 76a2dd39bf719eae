#pragma once

#include "ttsgd/errors.hpp"
#include "ttsgd/linalg.hpp"
#include "ttsgd/sde.hpp"
#include "ttsgd/record.hpp"
#include "ttsgd/kalman_bucy.hpp"
#include "ttsgd/scalar_linear.hpp"
#include "ttsgd/benes.hpp"
#include "ttsgd/advdiff.hpp"
#include "ttsgd/schedule.hpp"
#include "ttsgd/two_timescale.hpp"
#include "ttsgd/joint.hpp"
#include "ttsgd/diagnostics.hpp"
#include "ttsgd/gradient_check.hpp"
