#pragma once

#include "tobitm/error.hpp"
#include "tobitm/core_data.hpp"
#include "tobitm/loss.hpp"
#include "tobitm/first_stage.hpp"
#include "tobitm/nelder_mead.hpp"
#include "tobitm/m_estimator.hpp"
#include "tobitm/covariance.hpp"
#include "tobitm/parallel.hpp"
#include "tobitm/monte_carlo.hpp"
#include "tobitm/bootstrap.hpp"
#include "tobitm/csv.hpp"
#include "tobitm/cli.hpp"
