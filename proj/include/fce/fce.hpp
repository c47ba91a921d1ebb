#pragma once

#include "core.hpp"
#include "hankel_data.hpp"
#include "arx_estimator.hpp"
#include "predictor.hpp"
#include "qp.hpp"
#include "fce_controller.hpp"
#include "subspace_ddpc.hpp"
#include "plant_sim.hpp"
#include "controllers.hpp"
#include "bench_harness.hpp"
#include "config.hpp"
