#pragma once

#include "rldp/config.hpp"
#include "rldp/controls.hpp"
#include "rldp/core.hpp"
#include "rldp/diagnostics.hpp"
#include "rldp/ensemble.hpp"
#include "rldp/geometry.hpp"
#include "rldp/grid.hpp"
#include "rldp/integrator.hpp"
#include "rldp/io.hpp"
#include "rldp/ldp.hpp"
#include "rldp/measure_summary.hpp"
#include "rldp/measures.hpp"
#include "rldp/model.hpp"
#include "rldp/random.hpp"
#include "rldp/scenario.hpp"
