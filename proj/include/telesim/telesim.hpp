#pragma once

#include "telesim/channel.hpp"
#include "telesim/commands.hpp"
#include "telesim/config.hpp"
#include "telesim/dynamics.hpp"
#include "telesim/energy.hpp"
#include "telesim/errors.hpp"
#include "telesim/integrator.hpp"
#include "telesim/io.hpp"
#include "telesim/loss.hpp"
#include "telesim/quadrature.hpp"
#include "telesim/scenario.hpp"
#include "telesim/sim.hpp"
