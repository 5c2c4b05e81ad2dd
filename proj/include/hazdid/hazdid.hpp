#pragma once

#include "hazdid/error.hpp"
#include "hazdid/estimators.hpp"
#include "hazdid/hazard.hpp"
#include "hazdid/inference.hpp"
#include "hazdid/lsq.hpp"
#include "hazdid/panel.hpp"
#include "hazdid/parallel.hpp"
#include "hazdid/quadrature.hpp"
#include "hazdid/report.hpp"
#include "hazdid/rng.hpp"
#include "hazdid/simulate.hpp"
#include "hazdid/svg.hpp"
#include "hazdid/weighting.hpp"
