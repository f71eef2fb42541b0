#pragma once

#include "lcmm/bfgs.hpp"
#include "lcmm/classify.hpp"
#include "lcmm/error.hpp"
#include "lcmm/estimator.hpp"
#include "lcmm/ingest.hpp"
#include "lcmm/model.hpp"
#include "lcmm/parallel.hpp"
#include "lcmm/simulate.hpp"
#include "lcmm/stats.hpp"
#include "lcmm/survival.hpp"
#include "lcmm/svg.hpp"
#include "lcmm/text.hpp"
