#pragma once

#include "decoh/asymptotics.hpp"
#include "decoh/classical.hpp"
#include "decoh/coherence.hpp"
#include "decoh/config.hpp"
#include "decoh/index_report.hpp"
#include "decoh/noise.hpp"
#include "decoh/phase_grid.hpp"
#include "decoh/propagator.hpp"
#include "decoh/states.hpp"
#include "decoh/types.hpp"
