#pragma once

#include "vdprobe/agents.hpp"
#include "vdprobe/config.hpp"
#include "vdprobe/engine.hpp"
#include "vdprobe/interventions.hpp"
#include "vdprobe/metrics.hpp"
#include "vdprobe/presets.hpp"
#include "vdprobe/protocol.hpp"
#include "vdprobe/report.hpp"
#include "vdprobe/rng.hpp"
#include "vdprobe/synthetic.hpp"
#include "vdprobe/types.hpp"
