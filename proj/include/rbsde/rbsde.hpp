#pragma once

#include "rbsde/driver.hpp"
#include "rbsde/error.hpp"
#include "rbsde/gl_check.hpp"
#include "rbsde/lattice.hpp"
#include "rbsde/obstacle_builders.hpp"
#include "rbsde/optional_process.hpp"
#include "rbsde/penalization.hpp"
#include "rbsde/picard.hpp"
#include "rbsde/random_instances.hpp"
#include "rbsde/representation.hpp"
#include "rbsde/snell_mertens.hpp"
#include "rbsde/stopping_risk.hpp"
