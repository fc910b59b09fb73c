#pragma once

#include "control_laws.hpp"
#include "disturbance.hpp"
#include "errors.hpp"
#include "formation_graph.hpp"
#include "internal_model.hpp"
#include "linalg.hpp"
#include "rk4.hpp"
#include "runner.hpp"
#include "scenario.hpp"
#include "sim_engine.hpp"
