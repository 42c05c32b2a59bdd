#pragma once

#include "mixgw/errors.hpp"
#include "mixgw/linalg.hpp"
#include "mixgw/gaussian.hpp"
#include "mixgw/ot.hpp"
#include "mixgw/gmm.hpp"
#include "mixgw/stiefel.hpp"
#include "mixgw/mixture_ot.hpp"
#include "mixgw/io.hpp"
