#pragma once

// Umbrella header: the full rotating shallow water laboratory.

#include "rsw/core.hpp"
#include "rsw/norms.hpp"
#include "rsw/models.hpp"
#include "rsw/integrate.hpp"
#include "rsw/diagnostics.hpp"
#include "rsw/experiments.hpp"
