#pragma once

#include "dopf/bfm.hpp"
#include "dopf/conic.hpp"
#include "dopf/errors.hpp"
#include "dopf/feeder.hpp"
#include "dopf/isocp.hpp"
#include "dopf/powerflow.hpp"
#include "dopf/pslp.hpp"
#include "dopf/scenario.hpp"
