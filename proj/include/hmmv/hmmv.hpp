#pragma once

#include "hmmv/common.hpp"
#include "hmmv/cost_model.hpp"
#include "hmmv/trace.hpp"
#include "hmmv/workload.hpp"
#include "hmmv/mmu.hpp"
#include "hmmv/tracker.hpp"
#include "hmmv/classifier.hpp"
#include "hmmv/migrator.hpp"
#include "hmmv/pool.hpp"
#include "hmmv/baselines.hpp"
#include "hmmv/scenario.hpp"
#include "hmmv/report.hpp"
#include "hmmv/simulator.hpp"
