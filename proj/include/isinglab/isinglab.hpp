#pragma once

#include "isinglab/core.hpp"
#include "isinglab/data.hpp"
#include "isinglab/dynamics.hpp"
#include "isinglab/equilibrium.hpp"
#include "isinglab/ingest.hpp"
#include "isinglab/io.hpp"
#include "isinglab/kinetic.hpp"
#include "isinglab/metrics.hpp"
#include "isinglab/model.hpp"
#include "isinglab/optim.hpp"
#include "isinglab/parallel.hpp"
#include "isinglab/popgen.hpp"
#include "isinglab/result.hpp"
#include "isinglab/stats.hpp"
#include "isinglab/sweep.hpp"
