#pragma once

#include "doptsel/bench.hpp"
#include "doptsel/config.hpp"
#include "doptsel/errors.hpp"
#include "doptsel/hessian.hpp"
#include "doptsel/kaccess.hpp"
#include "doptsel/kstore.hpp"
#include "doptsel/linalg.hpp"
#include "doptsel/lti.hpp"
#include "doptsel/matrix.hpp"
#include "doptsel/parallel.hpp"
#include "doptsel/posterior.hpp"
#include "doptsel/rng.hpp"
#include "doptsel/selector.hpp"
#include "doptsel/trace_io.hpp"
