#pragma once

#include "valuekit/core.hpp"
#include "valuekit/data_model.hpp"
#include "valuekit/metrics.hpp"
#include "valuekit/thresholds.hpp"
#include "valuekit/gating.hpp"
#include "valuekit/stats.hpp"
#include "valuekit/ensemble.hpp"
#include "valuekit/synth.hpp"
#include "valuekit/pipeline.hpp"
